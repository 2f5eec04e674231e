"""Relational pooling over atom orderings, used as an exact symmetry oracle."""

import itertools
import logging
import math
from typing import Callable

import numpy as np

from frames.diagnostics import node_identity_frame
from geometry.molecule import MoleculeConf
from utils.errors import FrameError

logger = logging.getLogger(__name__)

MAX_ATOMS = 6


def relational_pool_reference(
    conf: MoleculeConf, model_eval: Callable[[MoleculeConf], float], max_atoms: int = MAX_ATOMS
) -> float:
    """Average ``model_eval`` over every ordering of the atoms.

    ``model_eval`` may depend on atom order (node identities); the average over
    all N! orderings cannot. Values are summed with math.fsum, which is exact and
    independent of summation order, so permuted inputs give bitwise equal results.

    Raises:
        FrameError: the molecule has more than ``max_atoms`` atoms
    """
    if conf.n_atoms > max_atoms:
        raise FrameError(f"relational pooling over {conf.n_atoms}! orderings is too large (limit {max_atoms} atoms)")
    values = [float(model_eval(conf.permuted(perm))) for perm in itertools.permutations(range(conf.n_atoms))]
    logger.debug("Pooled %d orderings", len(values))
    return math.fsum(values) / len(values)


def identity_readout(hidden: int = 16, seed: int = 0) -> Callable[[MoleculeConf], float]:
    """Random-feature readout over the node-identity frame of atom 0.

    Each atom j contributes tanh(W·[P(r_j - r_0), z_j, j, |r_j - r_0|] + b)·v.
    The result is O(3)- and translation-invariant but depends on atom order.
    """
    rng = np.random.default_rng(seed)
    weight = rng.normal(size=(6, hidden))
    bias = rng.normal(size=hidden)
    head = rng.normal(size=hidden) / np.sqrt(hidden)

    def evaluate(conf: MoleculeConf) -> float:
        frame = node_identity_frame(conf, 0)
        rel = conf.r - conf.r[0]
        features = np.column_stack(
            [rel @ frame.T, conf.z.astype(np.float64), np.arange(conf.n_atoms, dtype=np.float64), np.linalg.norm(rel, axis=1)]
        )
        return float(np.sum(np.tanh(features @ weight + bias) @ head))

    return evaluate
