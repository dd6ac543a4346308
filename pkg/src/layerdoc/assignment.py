"""IoU between binary masks and maximum-weight bipartite assignment."""
from __future__ import annotations

import numpy as np

from .document import Mask
from .exceptions import PreconditionError, StructuralError

TIE_TOL = 1e-9


def iou(a: Mask, b: Mask) -> float:
    """Intersection over union; two empty masks agree perfectly (1.0)."""
    if a.shape != b.shape:
        raise StructuralError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def similarity_matrix(rows: list[Mask], cols: list[Mask]) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = iou(a, b)
    return out


def _min_cost_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Square min-cost assignment via shortest augmenting paths.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are optimal dual
    potentials, i.e. ``cost[i, j] - u[i] - v[j] >= 0`` with equality on the
    chosen pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)  # 1-based; 0 = unassigned
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        way = np.zeros(n + 1, dtype=int)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1  # argmin takes the lowest column on ties
            delta = cand[j1 - 1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _max_weight(weights: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    if weights.size == 0:
        return np.empty(0, dtype=int), 0.0, np.zeros(weights.shape)
    cols, u, v = _min_cost_assignment(-weights)
    total = float(weights[np.arange(len(cols)), cols].sum())
    reduced = -weights - u[:, None] - v[None, :]
    return cols, total, reduced


def _pad_square(similarity: np.ndarray) -> np.ndarray:
    r, c = similarity.shape
    n = max(r, c)
    padded = np.zeros((n, n))
    padded[:r, :c] = similarity
    return padded


def hungarian_max(similarity) -> list[tuple[int, int]]:
    """Maximum-weight one-to-one assignment of rows to columns.

    Rectangular inputs are zero-padded to square; pairs landing on padding
    are dropped, so the result has ``min(rows, cols)`` pairs. Among all
    optimal assignments the one with the lexicographically smallest column
    sequence (taken in row order) is returned, which makes ties resolve
    identically on every run.
    """
    s = np.asarray(similarity, dtype=float)
    if s.ndim != 2 or s.size == 0:
        raise PreconditionError("similarity matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(s)):
        raise PreconditionError("similarity matrix must be finite")
    r, c = s.shape
    w = _pad_square(s)
    n = w.shape[0]
    scale = max(1.0, float(np.abs(w).max()))
    tol = TIE_TOL * scale * n

    rows_left = list(range(n))
    cols_left = list(range(n))
    chosen: dict[int, int] = {}
    while rows_left:
        sub = w[np.ix_(rows_left, cols_left)]
        best_cols, best_total, reduced = _max_weight(sub)
        pick = best_cols[0]
        # Only columns with zero reduced cost can appear in an optimal solution.
        for k in range(best_cols[0]):
            if abs(reduced[0, k]) > tol:
                continue
            rest_rows = rows_left[1:]
            rest_cols = cols_left[:k] + cols_left[k + 1 :]
            _, rest_total, _ = _max_weight(w[np.ix_(rest_rows, rest_cols)])
            if sub[0, k] + rest_total >= best_total - tol:
                pick = k
                break
        chosen[rows_left[0]] = cols_left[pick]
        rows_left = rows_left[1:]
        cols_left = cols_left[:pick] + cols_left[pick + 1 :]

    return [(i, j) for i, j in sorted(chosen.items()) if i < r and j < c]


def assignment_weight(similarity, pairs) -> float:
    s = np.asarray(similarity, dtype=float)
    return float(sum(s[i, j] for i, j in pairs))
