"""Block-structured dense matrix construction.

Everything here is a pure function on 2-D float arrays. Matrices are kept
dense and row-major; problem sizes downstream (a few hundred rows) do not
justify sparse storage.
"""

import numpy as np

from .errors import DimensionMismatch

__all__ = ["kron", "blkdg", "blkmat", "build_theta", "build_gamma"]


def _as_matrix(a):
    """Coerce scalars / nested lists / 1-D arrays to a 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    elif m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={m.ndim}")
    return m


def kron(a, b):
    """Kronecker product of two matrices."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def blkdg(*blocks):
    """Block-diagonal stack of matrices; off-diagonal fill is exactly zero.

    Accepts either ``blkdg(a, b, c)`` or ``blkdg([a, b, c])``.
    """
    if len(blocks) == 1 and isinstance(blocks[0], (list, tuple)):
        blocks = tuple(blocks[0])
    if not blocks:
        raise DimensionMismatch("blkdg needs at least one block")
    mats = [_as_matrix(b) for b in blocks]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def blkmat(grid):
    """Dense assembly of a 2-D grid of blocks.

    Raises
    ------
    DimensionMismatch
        If block heights are inconsistent within a grid row, or widths
        within a grid column.
    """
    if not grid or not all(len(row) for row in grid):
        raise DimensionMismatch("blkmat needs a non-empty grid")
    ncols = len(grid[0])
    if any(len(row) != ncols for row in grid):
        raise DimensionMismatch("blkmat grid rows have different lengths")
    mats = [[_as_matrix(b) for b in row] for row in grid]
    for i, row in enumerate(mats):
        heights = {m.shape[0] for m in row}
        if len(heights) != 1:
            raise DimensionMismatch(f"inconsistent block heights in grid row {i}")
    for j in range(ncols):
        widths = {row[j].shape[1] for row in mats}
        if len(widths) != 1:
            raise DimensionMismatch(f"inconsistent block widths in grid column {j}")
    return np.block([[m for m in row] for row in mats])


def build_theta(a, horizon):
    """Stacked state predictor col(A^1, ..., A^T).

    Predicts x[1..T] from x0, i.e. powers start at one.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionMismatch("build_theta needs a square matrix")
    if horizon < 1:
        raise DimensionMismatch("horizon must be >= 1")
    out = np.zeros((n * horizon, n))
    a_pow = a.copy()
    for t in range(horizon):
        out[t * n:(t + 1) * n, :] = a_pow
        if t + 1 < horizon:
            a_pow = a_pow @ a
    return out


def build_gamma(a, b, horizon):
    """Lower block-triangular input-to-state map for x[1..T].

    Block (r, c), one-indexed with r >= c, equals A^(r-c) B; the block
    diagonal is B itself. Column c collects the effect of the input applied
    at stage c-1.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionMismatch("build_gamma needs a square dynamics matrix")
    if b.shape[0] != n:
        raise DimensionMismatch("input matrix height must match the state dimension")
    if horizon < 1:
        raise DimensionMismatch("horizon must be >= 1")
    m = b.shape[1]
    out = np.zeros((n * horizon, m * horizon))
    # first block column: col(B, AB, ..., A^{T-1} B); later columns repeat it shifted
    col = np.zeros((n * horizon, m))
    col[0:n, :] = b
    for r in range(1, horizon):
        col[r * n:(r + 1) * n, :] = a @ col[(r - 1) * n:r * n, :]
    for c in range(horizon):
        out[c * n:, c * m:(c + 1) * m] = col[:(horizon - c) * n, :]
    return out
