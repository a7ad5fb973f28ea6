"""Spatial weight matrices and their panel (block-diagonal) expansions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidDimensionError, SingularFilterError, WeightMatrixError

_ROW_SUM_TOL = 1e-12
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SpatialWeights:
    """Row-normalized N x N spatial weight matrix with zero diagonal.

    Parameters
    ----------
    weights : np.ndarray
        (n, n) nonnegative matrix.  Every row with at least one neighbor
        must sum to 1 within 1e-12; the diagonal must be zero.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise WeightMatrixError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise WeightMatrixError("weight matrix contains non-finite entries")
        if np.any(w < 0):
            raise WeightMatrixError("weight matrix contains negative entries")
        if np.any(np.abs(np.diag(w)) > 0):
            raise WeightMatrixError("weight matrix diagonal must be zero")
        sums = w.sum(axis=1)
        bad = np.flatnonzero((sums > 0) & (np.abs(sums - 1.0) > _ROW_SUM_TOL))
        if bad.size:
            raise WeightMatrixError(
                f"rows {bad.tolist()} are not normalized (row sums {sums[bad].tolist()})"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def build_rook_weights(rows: int, cols: int) -> SpatialWeights:
    """Row-normalized rook contiguity on a rows x cols lattice.

    Cell (r, c) is a neighbor of the up/down/left/right cells that exist.
    Units are numbered row-major, N = rows * cols.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise InvalidDimensionError(f"lattice {rows}x{cols} has fewer than 2 cells")
    n = rows * cols
    w = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if r > 0:
                w[i, i - cols] = 1.0
            if r < rows - 1:
                w[i, i + cols] = 1.0
            if c > 0:
                w[i, i - 1] = 1.0
            if c < cols - 1:
                w[i, i + 1] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    return SpatialWeights(w)


def kron_expand(w: SpatialWeights, t: int) -> np.ndarray:
    """Block-diagonal panel expansion I_T (x) W as a dense NT x NT matrix.

    For large panels prefer :func:`apply_expanded`, which applies the
    operator per time slice without materializing the full matrix.
    """
    if t < 1:
        raise InvalidDimensionError(f"t must be >= 1, got {t}")
    return np.kron(np.eye(t), w.weights)


def apply_expanded(w: SpatialWeights, t: int, vec: np.ndarray) -> np.ndarray:
    """Apply I_T (x) W to a stacked vector or matrix without forming the Kronecker product.

    Stacking convention: entry (i, t) sits at position t*N + i (time-major).
    """
    if t < 1:
        raise InvalidDimensionError(f"t must be >= 1, got {t}")
    v = np.asarray(vec, dtype=float)
    n = w.n
    if v.shape[0] != n * t:
        raise InvalidDimensionError(f"vector length {v.shape[0]} != N*T = {n * t}")
    blocks = v.reshape(t, n, -1)
    out = np.einsum("ij,tjk->tik", w.weights, blocks)
    return out.reshape(v.shape)


@dataclass(frozen=True)
class SpatialFilter:
    """The operator B = I_NT - coef * (I_T (x) W) together with its inverse.

    Exploits the block-diagonal structure: all work happens on the N x N
    block I_N - coef * W, LU-factored once at construction.
    """

    w: SpatialWeights
    t: int
    coef: float
    _lu: tuple = field(repr=False, default=None)

    def __post_init__(self):
        if abs(self.coef) >= 1:
            raise InvalidDimensionError(f"|coef| must be < 1, got {self.coef}")
        if self.t < 1:
            raise InvalidDimensionError(f"t must be >= 1, got {self.t}")
        block = np.eye(self.w.n) - self.coef * self.w.weights
        cond = np.linalg.cond(block, 1)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularFilterError(
                f"filter block I - {self.coef} * W has condition estimate {cond:.3g}"
            )
        object.__setattr__(self, "_lu", linalg.lu_factor(block))

    @property
    def block(self) -> np.ndarray:
        """The N x N block I_N - coef * W."""
        return np.eye(self.w.n) - self.coef * self.w.weights

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """B @ vec for a stacked NT vector (or NT x k matrix)."""
        return np.asarray(vec, dtype=float) - self.coef * apply_expanded(self.w, self.t, vec)

    def solve(self, vec: np.ndarray) -> np.ndarray:
        """B^{-1} @ vec, per time slice via the cached LU factorization."""
        v = np.asarray(vec, dtype=float)
        n = self.w.n
        if v.shape[0] != n * self.t:
            raise InvalidDimensionError(f"vector length {v.shape[0]} != N*T = {n * self.t}")
        blocks = v.reshape(self.t, n, -1)
        out = np.stack([linalg.lu_solve(self._lu, b) for b in blocks])
        return out.reshape(v.shape)


def spatial_filter(w: SpatialWeights, t: int, coef: float) -> SpatialFilter:
    """Construct B = I - coef * (I_T (x) W) with its inverse-application routine."""
    return SpatialFilter(w, t, coef)


def load_weights_csv(path, normalize: bool = False) -> SpatialWeights:
    """Load an N x N weight matrix from a headerless CSV of N rows.

    With ``normalize=True`` rows are rescaled to sum to 1 (zero rows kept as-is)
    and the diagonal is zeroed before validation.
    """
    w = np.loadtxt(path, delimiter=",", ndmin=2)
    if normalize:
        w = np.array(w, dtype=float)
        np.fill_diagonal(w, 0.0)
        sums = w.sum(axis=1, keepdims=True)
        w = np.divide(w, sums, out=w, where=sums > 0)
    return SpatialWeights(w)


def save_weights_csv(path, w: SpatialWeights) -> None:
    """Write the weight matrix as a headerless CSV."""
    with open(path, "w", newline="") as fh:
        for row in w.weights:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
