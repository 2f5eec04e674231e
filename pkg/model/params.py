"""Model parameters: an ordered set of named float64 arrays."""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np

from geometry.basis import rbf_init
from model.config import ModelConfig
from utils.errors import ShapeError

logger = logging.getLogger(__name__)

HEADS = ("energy", "dipole", "r2")


def filter_prefix(config: ModelConfig, layer: int) -> str:
    return "filter" if config.share_filters else f"layers.{layer}.filter"


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Names and shapes of every parameter the configuration needs."""
    f, k, n_species = config.hidden, config.rbf_count, len(config.species)
    shapes = OrderedDict()
    shapes["embedding.atom"] = (n_species, f)
    shapes["embedding.neighbor"] = (n_species, f)
    shapes["embedding.filter.weight"] = (k, f)
    shapes["embedding.filter.bias"] = (f,)
    shapes["rbf.betas"] = (k,)
    shapes["rbf.mus"] = (k,)
    if config.uses_frames:
        shapes["frame.filter.weight"] = (k, f)
        shapes["frame.filter.bias"] = (f,)
        if config.use_d3:
            shapes["frame.w1"] = (f, f)
            shapes["frame.w2"] = (f, f)
    g2_inputs = config.projection_channels * f + (0 if config.decompose_filters else k)
    for layer in range(config.filter_sets):
        prefix = filter_prefix(config, layer)
        if config.schnet_mode or config.decompose_filters:
            shapes[f"{prefix}.g1.weight"] = (k, f)
            shapes[f"{prefix}.g1.bias"] = (f,)
        if not config.schnet_mode:
            shapes[f"{prefix}.g2.0.weight"] = (g2_inputs, f)
            shapes[f"{prefix}.g2.0.bias"] = (f,)
            shapes[f"{prefix}.g2.1.weight"] = (f, f)
            shapes[f"{prefix}.g2.1.bias"] = (f,)
    for layer in range(config.layers):
        shapes[f"layers.{layer}.update.0.weight"] = (f, f)
        shapes[f"layers.{layer}.update.0.bias"] = (f,)
        shapes[f"layers.{layer}.update.1.weight"] = (f, f)
        shapes[f"layers.{layer}.update.1.bias"] = (f,)
    for head in HEADS:
        shapes[f"head.{head}.weight"] = (f, 1)
        shapes[f"head.{head}.bias"] = (1,)
    if config.species_offset:
        shapes["head.species_offset"] = (n_species,)
    return shapes


class ModelParams:
    """Named parameter arrays for one ModelConfig.

    Iteration order is the declaration order of parameter_shapes, which fixes
    the order of optimizer updates and checkpoint entries.
    """

    def __init__(self, config: ModelConfig, tensors: Dict[str, np.ndarray]):
        self.config = config
        expected = parameter_shapes(config)
        missing = set(expected) - set(tensors)
        extra = set(tensors) - set(expected)
        if missing or extra:
            raise ShapeError(f"parameters do not match config (missing {sorted(missing)}, unexpected {sorted(extra)})")
        self.tensors = OrderedDict()
        for name, shape in expected.items():
            array = np.array(tensors[name], dtype=np.float64)
            if array.shape != shape:
                raise ShapeError(f"parameter {name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise ValueError(f"parameter {name} contains non-finite values")
            self.tensors[name] = array

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """Random initial parameters.

        Linear weights and biases are uniform in ±1/sqrt(fan_in); embeddings are
        standard normal; rbf parameters start from rbf_init; species offsets at zero.
        """
        rng = np.random.default_rng(seed)
        betas, mus = rbf_init(config.rbf_count, config.cutoff)
        tensors = {}
        for name, shape in parameter_shapes(config).items():
            if name.startswith("embedding.atom") or name.startswith("embedding.neighbor"):
                tensors[name] = rng.standard_normal(shape)
            elif name == "rbf.betas":
                tensors[name] = betas.copy()
            elif name == "rbf.mus":
                tensors[name] = mus.copy()
            elif name == "head.species_offset":
                tensors[name] = np.zeros(shape)
            else:
                fan_in = shape[0]
                if name.endswith(".bias"):
                    fan_in = parameter_shapes(config)[name[: -len("bias")] + "weight"][0]
                bound = 1.0 / np.sqrt(fan_in)
                tensors[name] = rng.uniform(-bound, bound, size=shape)
        params = cls(config, tensors)
        logger.debug("Initialized %d parameters (%d values)", len(params.tensors), params.parameter_count())
        return params

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {name: a.copy() for name, a in self.tensors.items()})

    def replaced(self, updates: Dict[str, np.ndarray]) -> "ModelParams":
        tensors = dict(self.tensors)
        tensors.update(updates)
        return ModelParams(self.config, tensors)

    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.tensors.values()))

    def filter_parameter_count(self) -> int:
        """Values in the edge-filter networks (g₁, g₂)."""
        return int(sum(a.size for name, a in self.tensors.items() if ".filter.g" in f".{name}"))
