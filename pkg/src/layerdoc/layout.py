"""Mask-level layout consistency between an original and an edited document."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assignment import hungarian_max, iou, similarity_matrix
from .document import Document, Mask, alpha_mask
from .exceptions import DegenerateInputError, StructuralError

# Sum of the positive weights: the best score attainable with the defaults.
DEFAULT_POSITIVE_SUM = 0.85


@dataclass(frozen=True)
class LayoutWeights:
    w_match: float = 0.25
    w_pos: float = 0.2
    w_shape: float = 0.2
    w_area: float = 0.2
    w_penalty: float = 0.15
    iou_threshold: float = 0.05
    new_layer_coeff: float = 0.7

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def positive_sum(self) -> float:
        return self.w_match + self.w_pos + self.w_shape + self.w_area


@dataclass(frozen=True)
class MatchedPair:
    orig_id: str
    edit_id: str
    c_pos: float
    c_shape: float
    c_area: float


@dataclass(frozen=True)
class LayoutReport:
    matched_pairs: list[MatchedPair]
    match_rate: float
    penalty_disappeared: float
    penalty_new: float
    score: float
    normalized_score: float
    weights: LayoutWeights = field(default_factory=LayoutWeights)

    def to_dict(self) -> dict:
        return {
            "matched_pairs": [asdict(p) for p in self.matched_pairs],
            "match_rate": self.match_rate,
            "penalty_disappeared": self.penalty_disappeared,
            "penalty_new": self.penalty_new,
            "score": self.score,
            "normalized_score": self.normalized_score,
            "weights": asdict(self.weights),
        }


def centroid(mask: Mask) -> tuple[float, float]:
    """Mean (x, y) of set pixels, measured at pixel centres."""
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        raise DegenerateInputError("centroid of an empty mask is undefined")
    return float(xs.mean() + 0.5), float(ys.mean() + 0.5)


def position_consistency(a: Mask, b: Mask, width: int, height: int) -> float:
    if a.shape != b.shape:
        raise StructuralError(f"mask shapes differ: {a.shape} vs {b.shape}")
    (ax, ay), (bx, by) = centroid(a), centroid(b)
    return 1.0 - math.hypot(ax - bx, ay - by) / math.hypot(height, width)


def area_consistency(a: Mask, b: Mask) -> float:
    small, large = sorted((a.area, b.area))
    if large == 0:
        raise DegenerateInputError("area consistency of two empty masks is undefined")
    return small / large


def _mask_id(mask: Mask, index: int) -> str:
    return mask.source_layer if mask.source_layer is not None else str(index)


def layout_consistency_masks(
    original_masks: list[Mask],
    edited_masks: list[Mask],
    width: int,
    height: int,
    weights: LayoutWeights | None = None,
) -> LayoutReport:
    """Score how well ``edited_masks`` preserve the layout of ``original_masks``."""
    weights = weights or LayoutWeights()
    for m in [*original_masks, *edited_masks]:
        if m.shape != (height, width):
            raise StructuralError(f"mask of shape {m.shape} on a {width}x{height} canvas")
    canvas = float(width * height)

    pairs: list[tuple[int, int]] = []
    if original_masks and edited_masks:
        sim = similarity_matrix(original_masks, edited_masks)
        pairs = [
            (i, j)
            for i, j in hungarian_max(sim)
            if sim[i, j] >= weights.iou_threshold
            and (original_masks[i].area or edited_masks[j].area)
        ]

    matched = []
    for i, j in pairs:
        a, b = original_masks[i], edited_masks[j]
        if a.area and b.area:
            c_pos = position_consistency(a, b, width, height)
        else:
            c_pos = 0.0  # reachable only with iou_threshold == 0
        matched.append(
            MatchedPair(_mask_id(a, i), _mask_id(b, j), c_pos, iou(a, b), area_consistency(a, b))
        )

    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    p_disappeared = sum(m.area for i, m in enumerate(original_masks) if i not in matched_rows) / canvas
    p_new = weights.new_layer_coeff * sum(
        m.area for j, m in enumerate(edited_masks) if j not in matched_cols
    ) / canvas

    denom = max(len(original_masks), len(edited_masks))
    match_rate = len(pairs) / denom if denom else 0.0
    if matched:
        mean_pos = float(np.mean([p.c_pos for p in matched]))
        mean_shape = float(np.mean([p.c_shape for p in matched]))
        mean_area = float(np.mean([p.c_area for p in matched]))
    else:
        mean_pos = mean_shape = mean_area = 0.0

    raw = (
        weights.w_match * match_rate
        + weights.w_pos * mean_pos
        + weights.w_shape * mean_shape
        + weights.w_area * mean_area
        - weights.w_penalty * (p_disappeared + p_new)
    )
    score = max(0.0, raw)
    positive = weights.positive_sum
    return LayoutReport(
        matched_pairs=matched,
        match_rate=match_rate,
        penalty_disappeared=p_disappeared,
        penalty_new=p_new,
        score=score,
        normalized_score=score / positive if positive > 0 else 0.0,
        weights=weights,
    )


def document_masks(document: Document, threshold=0.5) -> list[Mask]:
    return [alpha_mask(layer, threshold) for layer in document.layers]


def layout_consistency(
    original: Document,
    edited_masks: list[Mask],
    weights: LayoutWeights | None = None,
    threshold=0.5,
) -> LayoutReport:
    """Layout consistency using the original document's per-layer alpha masks."""
    return layout_consistency_masks(
        document_masks(original, threshold), list(edited_masks), original.width, original.height, weights
    )
