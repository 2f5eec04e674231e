"""Numerical diagnostics for frames: rank, invertibility, node-identity frames."""

import numpy as np

from geometry.molecule import MoleculeConf
from utils.errors import FrameError, ShapeError

RANK_RTOL = 1e-7
RANK_ATOL = 1e-12


def frame_rank(frame, tol: float = RANK_RTOL) -> int:
    """Numerical rank of an F x 3 frame from its singular values.

    Counts singular values above ``tol`` times the largest one; a frame whose
    largest singular value is below 1e-12 has rank 0.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    frame = np.asarray(getattr(frame, "data", frame), dtype=np.float64)
    if frame.ndim != 2 or frame.shape[1] != 3:
        raise ShapeError(f"frame must be (F, 3), got {frame.shape}")
    if frame.size == 0:
        return 0
    sigma = np.linalg.svd(frame, compute_uv=False)
    if sigma[0] < RANK_ATOL:
        return 0
    return int(np.sum(sigma > tol * sigma[0]))


def project(x, frame) -> np.ndarray:
    """P_Ê(x) = x Êᵀ."""
    return np.asarray(x, dtype=np.float64) @ np.asarray(frame, dtype=np.float64).T


def project_and_invert(x, frame, tol: float = 1e-9) -> np.ndarray:
    """Project onto a full-rank 3 x 3 frame and solve back for x.

    Raises:
        FrameError: the frame has rank below 3 at ``tol``
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (3, 3):
        raise ShapeError(f"frame must be 3 x 3, got {frame.shape}")
    if frame_rank(frame, tol) < 3:
        raise FrameError("frame is singular; the projection cannot be inverted")
    projected = project(x, frame)
    # x Êᵀ = p  <=>  Ê xᵀ = pᵀ
    return np.linalg.solve(frame, projected.T).T


def node_identity_frame(conf: MoleculeConf, center: int, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal frame of span{r_j - r_i} built in atom-index order.

    Relative positions are scanned by increasing j; each one that is linearly
    independent of the rows so far is Gram-Schmidt orthonormalized and kept.
    Unused rows stay zero.
    """
    if not 0 <= center < conf.n_atoms:
        raise IndexError(f"center {center} out of range for {conf.n_atoms} atoms")
    frame = np.zeros((3, 3))
    rank = 0
    for j in range(conf.n_atoms):
        if j == center or rank == 3:
            continue
        v = conf.r[j] - conf.r[center]
        residual = v - frame[:rank].T @ (frame[:rank] @ v)
        norm = np.linalg.norm(residual)
        if norm > tol * np.linalg.norm(v):
            frame[rank] = residual / norm
            rank += 1
    return frame
