import numpy as np
import pytest

from geometry import MoleculeConf
from training import load_extxyz, write_extxyz
from training.extxyz import parse_comment_line, parse_properties, read_confs
from utils.errors import GeometryError, ParseError

FRAME_WITH_FORCES = """3
Properties=species:S:1:pos:R:3:forces:R:3 energy=-40.5 pbc="F F F"
O 0.0 0.0 0.0 0.1 0.2 0.3
H 0.96 0.0 0.0 -0.1 0.0 0.0
H -0.24 0.93 0.0 0.0 -0.2 -0.3
"""


def _write(tmp_path, text, name="data.xyz"):
    path = tmp_path / name
    path.write_text(text, encoding="ascii")
    return path


def test_single_atom_without_targets(tmp_path):
    ds = load_extxyz(_write(tmp_path, "1\nProperties=species:S:1:pos:R:3\nH 0.0 0.0 0.0\n"))
    assert len(ds) == 1
    assert ds.target == "none"
    assert ds[0].energy is None and ds[0].forces is None


def test_frame_with_energy_and_forces(tmp_path):
    ds = load_extxyz(_write(tmp_path, FRAME_WITH_FORCES + "\n" + FRAME_WITH_FORCES))
    assert len(ds) == 2
    assert ds.target == "pes" and ds.has_forces
    conf = ds[0]
    assert conf.energy == -40.5
    assert np.array_equal(conf.z, [8, 1, 1])
    assert np.array_equal(conf.forces[2], [0.0, -0.2, -0.3])
    assert ds.source.endswith("data.xyz")


def test_missing_header_defaults_to_positions_only():
    confs = read_confs("2\nenergy=1.5 dipole=0.7\nC 0 0 0\nO 1.2 0 0\n")
    assert confs[0].energy == 1.5
    assert confs[0].properties == {"dipole": 0.7}


def test_short_force_block_names_the_frame(tmp_path):
    broken = FRAME_WITH_FORCES + "3\nProperties=species:S:1:pos:R:3:forces:R:3 energy=-1.0\nO 0 0 0 0 0 0\nH 1 0 0 0 0 0\n"
    with pytest.raises(ParseError) as info:
        load_extxyz(_write(tmp_path, broken))
    assert info.value.frame == 1
    assert "frame 1" in str(info.value)


@pytest.mark.parametrize(
    "text, line",
    [
        ("x\n\nH 0 0 0\n", 1),
        ("1\nProperties=species:S:1:pos:R:3\nH 0 0\n", 3),
        ("1\nProperties=species:S:1:pos:R:3\nXx 0 0 0\n", 3),
        ("1\nProperties=species:S:1:pos:R:3\nH 0 zero 0\n", 3),
        ("1\nProperties=pos:R:3:species:S:1\n0 0 0 H\n", 2),
        ("1\nProperties=species:S:1:pos:R:3 energy=low\nH 0 0 0\n", 2),
        ("2\nProperties=species:S:1:pos:R:3:forces:R:2\nH 0 0 0 0 0\n", 2),
        ("1\nProperties=species:S:1:pos:R:3 energy=nan\nH 0 0 0\n", 2),
        ("1\nProperties=species:S:1:pos:R:3 energy=-1.0 dipole=inf\nH 0 0 0\n", 2),
        ("1\nProperties=species:S:1:pos:R:3\nH 0 NaN 0\n", 3),
        ("1\nProperties=species:S:1:pos:R:3:forces:R:3 energy=-1.0\nH 0 0 0 0.1 -inf 0\n", 3),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        read_confs(text)
    assert info.value.line == line
    assert info.value.frame == 0


def test_non_ascii_bytes_are_a_parse_error(tmp_path):
    path = tmp_path / "latin1.xyz"
    path.write_bytes(b"1\nenergy=-1.0 comment=\xe9t\xe9\nH 0 0 0\n")
    with pytest.raises(ParseError, match="non-ASCII") as info:
        load_extxyz(path)
    assert info.value.line == 2
    with pytest.raises(ParseError) as info:
        read_confs("1\n\nH 0 0 0\nH\u00e9 0 0 0\n")
    assert info.value.line == 4


def test_coincident_atoms(tmp_path):
    with pytest.raises(GeometryError, match="frame 0"):
        load_extxyz(_write(tmp_path, "2\n\nH 0 0 0\nH 0 0 0\n"))


def test_comment_and_descriptor_parsing():
    info = parse_comment_line('Properties=species:S:1:pos:R:3 energy=-1.25 note="two words"')
    assert info == {"Properties": "species:S:1:pos:R:3", "energy": "-1.25", "note": "two words"}
    columns = parse_properties("species:S:1:pos:R:3:forces:R:3")
    assert [(c["name"], c["start"]) for c in columns] == [("species", 0), ("pos", 1), ("forces", 4)]
    with pytest.raises(ParseError):
        parse_properties("species:S:1:pos:R")


def test_write_read_round_trip(tmp_path, rng):
    confs = []
    for k in range(3):
        r = np.array([[0.0, 0.0, 0.0], [1.1, 0.0, 0.0], [0.0, 1.3, 0.0]]) + rng.normal(scale=0.05, size=(3, 3))
        confs.append(
            MoleculeConf(
                z=[6, 1, 8],
                r=r,
                energy=rng.normal() * 100.0,
                forces=rng.normal(size=(3, 3)),
                properties={"dipole": abs(rng.normal())},
            )
        )
    path = write_extxyz(tmp_path / "out" / "round.xyz", confs)
    loaded = load_extxyz(path)
    assert len(loaded) == 3
    for before, after in zip(confs, loaded):
        assert np.array_equal(after.z, before.z)
        assert np.array_equal(after.r, before.r)
        assert np.array_equal(after.forces, before.forces)
        assert after.energy == before.energy
        assert after.properties == before.properties


def test_write_replaces_targets(tmp_path, water):
    path = write_extxyz(
        tmp_path / "pred.xyz", [water], energies=[-3.5], forces=[np.ones((3, 3))], properties={"r2": [12.0]}
    )
    conf = load_extxyz(path)[0]
    assert conf.energy == -3.5
    assert np.array_equal(conf.forces, np.ones((3, 3)))
    assert conf.properties == {"r2": 12.0}


def test_write_checks_lengths(tmp_path, water):
    with pytest.raises(ValueError):
        write_extxyz(tmp_path / "x.xyz", [water], energies=[1.0, 2.0])
    with pytest.raises(ValueError):
        write_extxyz(tmp_path / "x.xyz", [water, water], properties={"dipole": [1.0]})
