from dataclasses import asdict, dataclass, fields, replace
from typing import Tuple

from utils.errors import ConfigError

TARGETS = ("energy", "dipole", "r2")
CUTOFF_RANGE = (4.0, 12.0)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Attributes:
        hidden: feature width F
        rbf_count: number of radial basis functions K
        layers: number of message passing layers L
        cutoff: cutoff radius r_c in Å, within [4, 12]
        use_d2: feed the neighbor-frame projection d² to the filter
        use_d3: feed the frame-frame projection d³ to the filter
        share_filters: one filter set for all layers instead of one per layer
        schnet_mode: distance-only filters; no frames or projections
        global_frame_mode: replace every local frame by the molecule's summed frame
        decompose_filters: g₁(rbf) ⊙ g₂(projections); when off, one MLP sees both
        species_offset: learned per-species energy shift
        species: atomic numbers covered by the embedding tables
        target: output head, one of "energy", "dipole", "r2"
    """

    hidden: int = 64
    rbf_count: int = 32
    layers: int = 4
    cutoff: float = 5.0
    use_d2: bool = False
    use_d3: bool = True
    share_filters: bool = True
    schnet_mode: bool = False
    global_frame_mode: bool = False
    decompose_filters: bool = True
    species_offset: bool = True
    species: Tuple[int, ...] = (1, 6, 7, 8)
    target: str = "energy"

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(int(z) for z in self.species))
        self.validate()

    def validate(self) -> None:
        for name in ("hidden", "rbf_count", "layers"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be at least 1, got {getattr(self, name)}")
        low, high = CUTOFF_RANGE
        if not low <= self.cutoff <= high:
            raise ConfigError("cutoff", f"must lie in [{low}, {high}] Å, got {self.cutoff}")
        if not self.species:
            raise ConfigError("species", "at least one atomic number is required")
        if len(set(self.species)) != len(self.species) or min(self.species) < 1:
            raise ConfigError("species", f"must be distinct positive atomic numbers, got {self.species}")
        if self.target not in TARGETS:
            raise ConfigError("target", f"must be one of {TARGETS}, got {self.target!r}")

    @property
    def uses_frames(self) -> bool:
        return not self.schnet_mode

    @property
    def projection_channels(self) -> int:
        """How many F-wide projection blocks enter the filter."""
        if self.schnet_mode:
            return 0
        return 1 + int(self.use_d2) + int(self.use_d3)

    @property
    def filter_sets(self) -> int:
        return 1 if self.share_filters else self.layers

    def with_updates(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["species"] = list(self.species)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown model setting")
        return cls(**data)
