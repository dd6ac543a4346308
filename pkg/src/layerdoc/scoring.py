"""Composite scores over the four normalised criteria.

The gated score multiplies layout and aesthetics credit by a sigmoid gate
on instruction following, so an editor that returns its input unchanged
cannot score well on layout alone. Three ungated baselines and Spearman's
rank correlation are provided for comparing aggregators.

Scores are exposed both as plain functions on :class:`RawScores` and as
the scikit-learn compatible :class:`CompositeScorer` transformer, which
maps an ``(n, 4)`` array with columns ``IF, LC, A, TR`` to one score per
row.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateInputError, PreconditionError

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RawScores:
    if_pct: float
    lc_pct: float
    tr_pct: float
    aes: float

    def __post_init__(self):
        for name in ("if_pct", "lc_pct", "tr_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100], got {v}")
        if not 1.0 <= self.aes <= 10.0:
            raise ValueError(f"aes must lie in [1, 10], got {self.aes}")

    def normalized(self) -> tuple[float, float, float, float]:
        """(IF_h, LC_h, TR_h, A_h), each in [0, 1]."""
        return self.if_pct / 100.0, self.lc_pct / 100.0, self.tr_pct / 100.0, self.aes / 10.0


@dataclass(frozen=True)
class MildeWeights:
    tau: float = 0.3
    k: float = 10.0
    w_if: float = 0.30
    w_lc: float = 0.30
    w_tr: float = 0.30
    w_a: float = 0.10
    w_sy: float = 0.15

    def __post_init__(self):
        total = self.w_if + self.w_lc + self.w_tr + self.w_a
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"w_if + w_lc + w_tr + w_a must equal 1, got {total}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")

    def to_dict(self) -> dict:
        return asdict(self)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def gate(if_h: float, tau: float = 0.3, k: float = 10.0) -> float:
    """Logistic gate rescaled so that gate(0) == 0 and gate(1) == 1."""
    if not 0.0 <= if_h <= 1.0:
        raise PreconditionError(f"if_h must lie in [0, 1], got {if_h}")
    low = _sigmoid(-k * tau)
    return (_sigmoid(k * (if_h - tau)) - low) / (_sigmoid(k * (1.0 - tau)) - low)


def milde_score(raw: RawScores, w: MildeWeights | None = None) -> float:
    """Gated composite score as a fraction (multiply by 100 for the percent scale)."""
    w = w or MildeWeights()
    if_h, lc_h, tr_h, aes_h = raw.normalized()
    opened = gate(if_h, w.tau, w.k)
    support = w.w_lc * lc_h + w.w_a * aes_h
    return w.w_if * if_h + w.w_tr * tr_h + opened * support + w.w_sy * opened * if_h * lc_h


def dw_sum(raw: RawScores, w: MildeWeights | None = None) -> float:
    w = w or MildeWeights()
    if_h, lc_h, tr_h, aes_h = raw.normalized()
    return w.w_if * if_h + w.w_tr * tr_h + w.w_lc * lc_h + w.w_a * aes_h


def geo_mean(raw: RawScores, w: MildeWeights | None = None) -> float:
    """Weighted geometric mean; any zero criterion gives 0."""
    w = w or MildeWeights()
    vals = raw.normalized()
    weights = (w.w_if, w.w_lc, w.w_tr, w.w_a)
    if any(v == 0.0 for v in vals):
        return 0.0
    total = sum(weights)
    return math.exp(sum(wt * math.log(v) for wt, v in zip(weights, vals)) / total)


def hcore_sup(raw: RawScores, w: MildeWeights | None = None) -> float:
    w = w or MildeWeights()
    if_h, lc_h, tr_h, aes_h = raw.normalized()
    core = (w.w_if * if_h + w.w_tr * tr_h) / (w.w_if + w.w_tr)
    sup = (w.w_lc * lc_h + w.w_a * aes_h) / (w.w_lc + w.w_a)
    if core + sup == 0.0:
        return 0.0
    return 2.0 * core * sup / (core + sup)


AGGREGATORS = {
    "milde": milde_score,
    "dw_sum": dw_sum,
    "geo_mean": geo_mean,
    "hcore_sup": hcore_sup,
}


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    start = 0
    while start < len(x):
        stop = start
        while stop + 1 < len(x) and sorted_x[stop + 1] == sorted_x[start]:
            stop += 1
        ranks[order[start : stop + 1]] = (start + stop) / 2.0 + 1.0
        start = stop + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DegenerateInputError(f"spearman needs two equal-length vectors, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise DegenerateInputError("spearman needs at least two observations")
    ra, rb = average_ranks(a), average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise DegenerateInputError("spearman is undefined for a constant vector")
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


class CompositeScorer(TransformerMixin, BaseEstimator):
    """Aggregate rows of ``[IF, LC, A, TR]`` raw scores into one composite score.

    IF, LC and TR are percentages in [0, 100]; A is the aesthetics rating
    in [1, 10]. ``transform`` returns fractions; ``score`` gives Spearman's
    rho against a vector of reference ratings.

    Parameters
    ----------
    aggregator : {"milde", "dw_sum", "geo_mean", "hcore_sup"}
    tau, k : gate threshold and steepness (only used by "milde").
    w_if, w_lc, w_tr, w_a : criterion weights, summing to 1.
    w_sy : synergy weight (only used by "milde").
    """

    def __init__(self, aggregator="milde", tau=0.3, k=10.0, w_if=0.30, w_lc=0.30, w_tr=0.30, w_a=0.10, w_sy=0.15):
        self.aggregator = aggregator
        self.tau = tau
        self.k = k
        self.w_if = w_if
        self.w_lc = w_lc
        self.w_tr = w_tr
        self.w_a = w_a
        self.w_sy = w_sy

    def _weights(self) -> MildeWeights:
        return MildeWeights(self.tau, self.k, self.w_if, self.w_lc, self.w_tr, self.w_a, self.w_sy)

    def fit(self, X, y=None):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}; choose from {sorted(AGGREGATORS)}")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != 4:
            raise ValueError(f"expected 4 columns (IF, LC, A, TR), got {X.shape[1]}")
        self.weights_ = self._weights()
        self.n_features_in_ = 4
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != 4:
            raise ValueError(f"expected 4 columns (IF, LC, A, TR), got {X.shape[1]}")
        fn = AGGREGATORS[self.aggregator]
        return np.array([fn(RawScores(r[0], r[1], r[3], r[2]), self.weights_) for r in X])

    def score(self, X, y):
        return spearman(self.transform(X), y)
