"""Symmetry, gradient and expressivity checks run by the ``verify`` command.

Each suite returns a SuiteResult with its worst observed error so that a
report shows how close every check came to its tolerance.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from frames.diagnostics import frame_rank
from frames.relational import identity_readout, relational_pool_reference
from geometry.molecule import MoleculeConf, as_batch, random_conformation, random_rotation
from model import network
from model.params import ModelParams, filter_prefix
from model.predict import GNNLF
from tensor_core import Tensor, grad_check, ops
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VerifyOptions:
    """Sizes of the randomized checks."""

    n_confs: int = 100
    n_transforms: int = 10
    min_atoms: int = 3
    max_atoms: int = 20
    gradcheck_confs: int = 20
    gradcheck_max_atoms: int = 8
    separation_seeds: int = 10
    relpool_max_atoms: int = 5
    seed: int = 0


@dataclass(frozen=True)
class SuiteResult:
    """
    Outcome of one suite.

    Attributes:
        name: suite name
        passed: every check met its tolerance
        worst: largest observed error divided by its tolerance (≤ 1 passes)
        checks: number of individual comparisons
        detail: per-quantity worst errors and other diagnostics
        seconds: wall-clock time
    """

    name: str
    passed: bool
    worst: float
    checks: int
    detail: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst": self.worst,
            "checks": self.checks,
            "seconds": self.seconds,
            "detail": self.detail,
        }


class _Tracker:
    """Collects (error, tolerance) pairs per quantity."""

    def __init__(self):
        self.worst: Dict[str, float] = {}
        self.tolerance: Dict[str, float] = {}
        self.checks = 0
        self.failed: List[str] = []

    def record(self, quantity: str, error: float, tolerance: float, where: str = "") -> None:
        error = float(error)
        self.checks += 1
        self.tolerance[quantity] = tolerance
        self.worst[quantity] = max(self.worst.get(quantity, 0.0), error)
        if not error <= tolerance:
            self.failed.append(f"{quantity} {where}".strip())

    def require(self, quantity: str, condition: bool, where: str = "") -> None:
        self.checks += 1
        self.worst.setdefault(quantity, 0.0)
        self.tolerance.setdefault(quantity, 0.0)
        if not condition:
            self.worst[quantity] = float("inf")
            self.failed.append(f"{quantity} {where}".strip())

    def result(self, name: str, extra: Optional[dict] = None) -> SuiteResult:
        ratios = [
            self.worst[q] / self.tolerance[q] if self.tolerance[q] > 0 else self.worst[q]
            for q in self.worst
        ]
        detail = {q: {"worst": self.worst[q], "tolerance": self.tolerance[q]} for q in self.worst}
        if self.failed:
            detail["failures"] = self.failed[:20]
        detail.update(extra or {})
        return SuiteResult(
            name=name,
            passed=not self.failed,
            worst=max(ratios, default=0.0),
            checks=self.checks,
            detail=detail,
        )


def _scaled(error: float, scale: float) -> float:
    return error / max(1.0, scale)


def energy_model(model: GNNLF) -> GNNLF:
    """The same network read out through the energy head."""
    if model.config.target == "energy":
        return model
    config = model.config.with_updates(target="energy")
    return GNNLF(config, ModelParams(config, model.params.tensors), model.normalization)


def frame_model(model: GNNLF, seed: int = 0) -> GNNLF:
    """``model`` if it builds frames, else a frame-enabled sibling with fresh weights."""
    if model.config.uses_frames:
        return energy_model(model)
    return GNNLF(model.config.with_updates(schnet_mode=False, target="energy"), seed=seed)


def frames_and_projections(model: GNNLF, conf: MoleculeConf):
    """(frames (N, F, 3), {"d1", "d2", "d3"} per-edge arrays, graph) of one conformation."""
    batch = as_batch(conf)
    bound = network.bind(model.params)
    positions = Tensor(batch.r)
    graph = network.neighbor_graph(batch, positions, bound, model.config)
    s0 = network.embed_atoms(batch, graph, bound, model.config)
    frames = network.compute_frames(batch, graph, s0, bound, model.config)
    projections = network.compute_projections(graph, frames, bound, model.config)
    channels = {"d1": projections.d1, "d2": projections.d2, "d3": projections.d3}
    return frames.numpy(), {k: v.numpy() for k, v in channels.items() if v is not None}, graph


def _random_confs(rng: np.random.Generator, model: GNNLF, count: int, low: int, high: int) -> List[MoleculeConf]:
    return [random_conformation(rng, int(rng.integers(low, high + 1)), model.config.species) for _ in range(count)]


# Suites


def check_equivariance(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Energy invariance and force/frame equivariance under O(3), translation and permutation."""
    rng = np.random.default_rng(options.seed)
    model = energy_model(model)
    track = _Tracker()
    for k, conf in enumerate(_random_confs(rng, model, options.n_confs, options.min_atoms, options.max_atoms)):
        energy, forces = model.energy_and_forces(conf)
        energy = float(energy[0])
        frames = projections = None
        if model.config.uses_frames:
            frames, projections, _ = frames_and_projections(model, conf)
        for _ in range(options.n_transforms):
            rotation = random_rotation(rng)
            shift = rng.normal(scale=5.0, size=3)
            perm = rng.permutation(conf.n_atoms)
            moved = conf.transformed(rotation, shift)
            other_energy, other_forces = model.energy_and_forces(moved.permuted(perm))
            track.record("energy", _scaled(abs(float(other_energy[0]) - energy), abs(energy)), 1e-10, f"conf {k}")
            expected = (forces @ rotation.T)[perm]
            scale = float(np.max(np.abs(forces)))
            track.record("forces", _scaled(float(np.max(np.abs(other_forces - expected))), scale), 1e-8, f"conf {k}")
            if frames is None:
                continue
            moved_frames, moved_proj, _ = frames_and_projections(model, moved)
            scale = float(np.max(np.abs(frames)))
            error = float(np.max(np.abs(moved_frames - frames @ rotation.T)))
            track.record("frames", _scaled(error, scale), 1e-8, f"conf {k}")
            for name, values in projections.items():
                if moved_proj[name].shape != values.shape:
                    track.require(name, False, f"conf {k}: edge set changed")
                    continue
                error = float(np.max(np.abs(moved_proj[name] - values), initial=0.0))
                track.record(name, _scaled(error, float(np.max(np.abs(values), initial=0.0))), 1e-10, f"conf {k}")
    return track.result("equivariance")


def check_gradients(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Tape forces against central finite differences (h = 1e-4 Å)."""
    rng = np.random.default_rng(options.seed + 1)
    model = energy_model(model)
    bound = network.bind(model.params)
    track = _Tracker()
    for k, conf in enumerate(
        _random_confs(rng, model, options.gradcheck_confs, options.min_atoms, options.gradcheck_max_atoms)
    ):
        batch = as_batch(conf)

        def energy(positions):
            return ops.reduce_sum(model.raw_output(batch, positions, bound))

        error = grad_check(energy, conf.r, h=1e-4, reduction="elementwise")
        track.record("forces", error, 1e-5, f"conf {k}")
    return track.result("gradcheck")


def check_net_force(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Predicted forces sum to zero."""
    rng = np.random.default_rng(options.seed + 2)
    model = energy_model(model)
    track = _Tracker()
    for k, conf in enumerate(
        _random_confs(rng, model, options.gradcheck_confs, options.min_atoms, options.max_atoms)
    ):
        forces = model.predict_forces(conf)
        net = float(np.max(np.abs(forces.sum(axis=0))))
        track.record("net_force", _scaled(net, float(np.max(np.abs(forces)))), 1e-9, f"conf {k}")
    return track.result("net-force")


def symmetric_fixtures(species: Sequence[int], seed: int = 0) -> List[Tuple[str, MoleculeConf, int]]:
    """Molecules with an inversion center at atom 0: (name, conf, center)."""
    outer, center = species[0], species[-1]
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=3), rng.normal(size=3)
    a *= 1.2 / np.linalg.norm(a)
    b *= 1.5 / np.linalg.norm(b)
    axes = np.eye(3) * 1.1
    layouts = {
        "linear": ([center, outer, outer], [np.zeros(3), axes[0] * 1.1, -axes[0] * 1.1]),
        "square": ([center] + [outer] * 4, [np.zeros(3), axes[0], -axes[0], axes[1], -axes[1]]),
        "octahedron": ([center] + [outer] * 6, [np.zeros(3)] + [s * axes[i] for i in range(3) for s in (1, -1)]),
        "inversion": ([center, outer, outer, species[1 % len(species)], species[1 % len(species)]], [np.zeros(3), a, -a, b, -b]),
    }
    return [(name, MoleculeConf(z=z, r=np.array(r)), 0) for name, (z, r) in layouts.items()]


def hexagon(species: Sequence[int], radius: float = 1.4) -> MoleculeConf:
    angles = np.arange(6) * np.pi / 3.0
    r = np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(6)])
    return MoleculeConf(z=[species[0]] * 6, r=r)


def check_cancellation(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """A centrosymmetric environment produces the zero frame."""
    model = frame_model(model, options.seed)
    track = _Tracker()
    for name, conf, center in symmetric_fixtures(model.config.species, options.seed):
        frames, _, _ = frames_and_projections(model, conf)
        track.record("frame_norm", float(np.max(np.abs(frames[center]))), 1e-12, name)
    return track.result("cancellation")


def check_global_degeneracy(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Symmetric molecules degenerate the global frame; asymmetric ones give full-rank frames."""
    model = frame_model(model, options.seed)
    track = _Tracker()
    ranks = {}
    fixtures = [(name, conf) for name, conf, _ in symmetric_fixtures(model.config.species, options.seed)]
    fixtures.append(("hexagon", hexagon(model.config.species)))
    for name, conf in fixtures:
        frames, _, _ = frames_and_projections(model, conf)
        local = [frame_rank(f) for f in frames]
        glob = frame_rank(frames.sum(axis=0))
        ranks[name] = {"local_min": min(local), "global": glob}
        if min(local) < 3:
            track.require("global_rank", glob < 3, name)

    rng = np.random.default_rng(options.seed + 3)
    for k in range(10):
        conf = random_conformation(rng, 6, model.config.species, bond=1.2)
        frames, _, graph = frames_and_projections(model, conf)
        for atom in range(conf.n_atoms):
            neighbors = graph.neighbor[graph.center == atom]
            rel = conf.r[neighbors] - conf.r[atom]
            if len(neighbors) >= 3 and frame_rank(rel, tol=1e-3) == 3:
                track.require("local_rank", frame_rank(frames[atom]) == 3, f"conf {k} atom {atom}")
    return track.result("global-degeneracy", {"ranks": ranks})


def separation_pair(bond: float, species: Sequence[int]) -> Tuple[MoleculeConf, MoleculeConf]:
    """Two bent triatomics with equal center distances and bond angles of 90° and 120°."""
    confs = []
    for angle in (np.pi / 2.0, 2.0 * np.pi / 3.0):
        r = np.array([[0.0, 0.0, 0.0], [bond, 0.0, 0.0], [bond * np.cos(angle), bond * np.sin(angle), 0.0]])
        confs.append(MoleculeConf(z=[species[-1], species[0], species[0]], r=r))
    return confs[0], confs[1]


def _center_d1(model: GNNLF, conf: MoleculeConf) -> np.ndarray:
    _, projections, graph = frames_and_projections(model, conf)
    return projections["d1"][graph.center == 0]


def _without_directions(model: GNNLF) -> GNNLF:
    """Zero every g₂ input weight that reads a projection channel."""
    config = model.config
    updates = {}
    for layer in range(config.filter_sets):
        name = f"{filter_prefix(config, layer)}.g2.0.weight"
        weight = model.params[name].copy()
        start = 0 if config.decompose_filters else config.rbf_count
        weight[start:] = 0.0
        updates[name] = weight
    return model.with_params(model.params.replaced(updates))


def check_separation(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Distance-only filters cannot tell the bent pair apart; projections can."""
    track = _Tracker()
    base = model.config.with_updates(schnet_mode=False, target="energy", global_frame_mode=False)
    wide_a, wide_b = separation_pair(1.0, base.species)
    near_a, near_b = separation_pair(3.0, base.species)
    gaps = []
    for seed in range(options.separation_seeds):
        schnet = GNNLF(base.with_updates(schnet_mode=True, cutoff=4.0), seed=seed)
        local = GNNLF(base.with_updates(cutoff=4.0), seed=seed)
        wide = GNNLF(base.with_updates(cutoff=10.0), seed=seed)

        emb_a, emb_b = schnet.embeddings(near_a), schnet.embeddings(near_b)
        track.record("schnet_embedding", float(np.max(np.abs(emb_a - emb_b))), 1e-12, f"seed {seed}")
        e_a, e_b = schnet.predict_energy(near_a), schnet.predict_energy(near_b)
        track.record("schnet_energy", _scaled(abs(e_a - e_b), abs(e_a)), 1e-12, f"seed {seed}")

        blind = _without_directions(local)
        e_a, e_b = blind.predict_energy(near_a), blind.predict_energy(near_b)
        track.record("blind_filter_energy", _scaled(abs(e_a - e_b), abs(e_a)), 1e-12, f"seed {seed}")

        gap = abs(local.predict_energy(near_a) - local.predict_energy(near_b))
        track.require("energy_gap", gap >= 1e-6, f"seed {seed}: |ΔE| = {gap:.3e}")

        d1_a, d1_b = _center_d1(wide, wide_a), _center_d1(wide, wide_b)
        spread = float(np.max(np.abs(np.sort(d1_a, axis=0) - np.sort(d1_b, axis=0))))
        track.require("d1_multiset", spread >= 0.1, f"seed {seed}: max-norm {spread:.3e}")
        gaps.append(float(np.sum(d1_a - d1_b)))
    return track.result("separation", {"d1_gap": gaps})


def check_relational_pooling(model: GNNLF, options: VerifyOptions) -> SuiteResult:
    """Pool the model's energy over every atom ordering.

    The pooled energy is bitwise invariant under shuffling the input and, as
    the model is itself permutation invariant, equal to the plain prediction.
    An order-dependent node-identity readout checks the pooling against an
    independently enumerated average.
    """
    model = energy_model(model)
    rng = np.random.default_rng(options.seed + 4)
    readout = identity_readout(seed=options.seed)
    track = _Tracker()
    for n_atoms in range(1, options.relpool_max_atoms + 1):
        conf = random_conformation(rng, n_atoms, model.config.species)
        shuffle = rng.permutation(n_atoms)
        where = f"{n_atoms} atoms"

        pooled = relational_pool_reference(conf, model.predict_energy)
        track.require("bitwise", relational_pool_reference(conf.permuted(shuffle), model.predict_energy) == pooled, where)
        direct = model.predict_energy(conf)
        track.record("model", _scaled(abs(pooled - direct), abs(direct)), 1e-10, where)

        pooled = relational_pool_reference(conf, readout)
        track.require("bitwise", relational_pool_reference(conf.permuted(shuffle), readout) == pooled, where)
        enumerated = np.mean([readout(conf.permuted(p)) for p in itertools.permutations(range(n_atoms))])
        track.record("enumerated", _scaled(abs(pooled - enumerated), abs(pooled)), 1e-12, where)
    return track.result("relpool")


def check_cutoff_smoothness(model: GNNLF, options: VerifyOptions, step: float = 1e-4, steps: int = 100) -> SuiteResult:
    """Sweep one atom across the cutoff sphere; the energy changes continuously."""
    model = energy_model(model)
    cutoff = model.config.cutoff
    species = model.config.species
    fixed = np.array([[0.0, 0.0, 0.0], [-1.2, 0.0, 0.0], [0.0, 1.1, 0.0]])
    z = [species[-1], species[0], species[0], species[0]]
    distances = cutoff + step * (np.arange(steps + 1) - steps // 2)
    energies = [model.predict_energy(MoleculeConf(z=z, r=np.vstack([fixed, [d, 0.0, 0.0]]))) for d in distances]
    track = _Tracker()
    jumps = np.abs(np.diff(energies))
    track.record("energy_step", float(np.max(jumps)), 1e-6)
    return track.result("cutoff-smoothness")


SUITES: Dict[str, Callable[[GNNLF, VerifyOptions], SuiteResult]] = {
    "equivariance": check_equivariance,
    "gradcheck": check_gradients,
    "net-force": check_net_force,
    "cancellation": check_cancellation,
    "global-degeneracy": check_global_degeneracy,
    "separation": check_separation,
    "relpool": check_relational_pooling,
    "cutoff-smoothness": check_cutoff_smoothness,
}


def parse_suites(selection) -> List[str]:
    """Suite names from a comma-separated string or list; "all" selects every suite."""
    if selection is None:
        return list(SUITES)
    names = selection.split(",") if isinstance(selection, str) else list(selection)
    names = [n.strip() for n in names if n.strip()]
    if not names or names == ["all"]:
        return list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError("suite", f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    return names


@dataclass
class VerifyReport:
    results: List[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "suites": [r.to_dict() for r in self.results]}


def run_suites(model: GNNLF, selection=None, options: VerifyOptions = VerifyOptions()) -> VerifyReport:
    results = []
    for name in parse_suites(selection):
        start = time.perf_counter()
        result = SUITES[name](model, options)
        result = replace(result, seconds=time.perf_counter() - start)
        logger.info("suite %s: %s (worst %.3g)", name, "pass" if result.passed else "FAIL", result.worst)
        results.append(result)
    return VerifyReport(results)
