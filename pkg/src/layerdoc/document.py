"""Layered RGBA documents, "over" compositing and alpha-derived masks.

Rasters are ``uint8`` arrays of shape ``(height, width, 4)`` holding
straight (non-premultiplied) alpha. Every value object here is immutable
once built: constructors copy incoming arrays and mark them read-only.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .exceptions import PreconditionError, StructuralError

LAYER_KINDS = ("text", "decoration", "image")


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x < other.x + other.w
            and other.x < self.x + self.w
            and self.y < other.y + other.h
            and other.y < self.y + self.h
        )

    def union(self, other: "Rect") -> "Rect":
        x0, y0 = min(self.x, other.x), min(self.y, other.y)
        x1 = max(self.x + self.w, other.x + other.w)
        y1 = max(self.y + self.h, other.y + other.h)
        return Rect(x0, y0, x1 - x0, y1 - y0)


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


def check_rgba(pixels, name="pixels") -> np.ndarray:
    """Validate an RGBA raster and return it as a read-only uint8 copy."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 4:
        raise StructuralError(f"{name} must have shape (H, W, 4), got {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
            raise StructuralError(f"{name} must hold 8-bit channel values")
        arr = arr.astype(np.uint8)
    return _frozen(arr)


def bbox_of(bits: np.ndarray) -> Rect | None:
    """Tight bounding box of the set pixels, ``None`` when nothing is set."""
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bits.any(axis=0))
    return Rect(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


@dataclass(frozen=True, eq=False)
class Layer:
    id: str
    pixels: np.ndarray
    z_index: int
    kind: str = "image"
    bbox: Rect | None = None

    def __post_init__(self):
        object.__setattr__(self, "pixels", check_rgba(self.pixels, f"layer {self.id!r}"))
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.bbox is not None:
            object.__setattr__(self, "bbox", Rect(*(int(v) for v in self.bbox)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[..., 3]

    def support_bbox(self) -> Rect | None:
        """Bounding box of pixels with non-zero alpha."""
        return bbox_of(self.alpha > 0)

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (
            self.id == other.id
            and self.z_index == other.z_index
            and self.kind == other.kind
            and self.bbox == other.bbox
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Document:
    width: int
    height: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(sorted(self.layers, key=lambda l: l.z_index))
        if not layers:
            raise StructuralError("a document needs at least one layer")
        for layer in layers:
            if layer.shape != (self.height, self.width):
                raise StructuralError(
                    f"layer {layer.id!r} is {layer.shape[1]}x{layer.shape[0]}, "
                    f"document is {self.width}x{self.height}"
                )
        zs = [l.z_index for l in layers]
        if len(set(zs)) != len(zs):
            raise StructuralError(f"z_index values must be unique, got {zs}")
        ids = [l.id for l in layers]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"layer ids must be unique, got {ids}")
        object.__setattr__(self, "layers", layers)

    @property
    def layer_ids(self) -> list[str]:
        return [l.id for l in self.layers]

    def layer(self, layer_id: str) -> Layer:
        for l in self.layers:
            if l.id == layer_id:
                return l
        raise KeyError(layer_id)

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and self.layers == other.layers

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mask:
    bits: np.ndarray
    source_layer: str | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise StructuralError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits.astype(bool)))

    @classmethod
    def empty(cls, height: int, width: int, source_layer=None) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool), source_layer)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def bbox(self) -> Rect | None:
        return bbox_of(self.bits)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.source_layer == other.source_layer and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class QAPair:
    question: str
    expected: str
    target_layer: str

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("QA question must be non-empty")
        if self.expected not in ("yes", "no"):
            raise ValueError(f"expected answer must be 'yes' or 'no', got {self.expected!r}")


@dataclass(frozen=True, eq=False)
class BenchmarkInstance:
    """One benchmark item: document, instruction and the gold edit plan.

    ``gold_layer_instructions`` only carries layers that must change; a
    missing key means the layer is a no-op.
    """

    document: Document
    instruction: str
    gold_relevant: frozenset[str] = frozenset()
    gold_layer_instructions: Mapping[str, str] = field(default_factory=dict)
    qa_pairs: tuple[QAPair, ...] | None = None
    id: str = ""

    def __post_init__(self):
        gold = frozenset(self.gold_relevant)
        object.__setattr__(self, "gold_relevant", gold)
        object.__setattr__(self, "gold_layer_instructions", dict(self.gold_layer_instructions))
        if self.qa_pairs is not None:
            object.__setattr__(self, "qa_pairs", tuple(self.qa_pairs))
        unknown = gold - set(self.document.layer_ids)
        if unknown:
            raise StructuralError(f"gold layers not in document: {sorted(unknown)}")
        stray = set(self.gold_layer_instructions) - gold
        if stray:
            raise StructuralError(f"layer instructions for non-gold layers: {sorted(stray)}")


def _over(fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    # Exact integer form of the straight-alpha "over" operator, rounded half up.
    af = fg[..., 3].astype(np.int64)
    ab = bg[..., 3].astype(np.int64)
    inv = 255 - af
    den = 255 * af + ab * inv  # 255**2 * alpha_out
    out = np.empty(fg.shape, dtype=np.uint8)
    out[..., 3] = (2 * den + 255) // 510
    safe = np.where(den > 0, den, 1)
    for c in range(3):
        num = 255 * af * fg[..., c].astype(np.int64) + ab * bg[..., c].astype(np.int64) * inv
        out[..., c] = np.where(den > 0, (2 * num + safe) // (2 * safe), 0)
    return out


def over(fg, bg) -> np.ndarray:
    """Composite raster ``fg`` over ``bg``."""
    fg = np.asarray(fg, dtype=np.uint8)
    bg = np.asarray(bg, dtype=np.uint8)
    if fg.shape != bg.shape:
        raise StructuralError(f"cannot composite {fg.shape} over {bg.shape}")
    return _over(fg, bg)


def composite_layers(layers: Iterable[Layer], height: int, width: int) -> np.ndarray:
    canvas = np.zeros((height, width, 4), dtype=np.uint8)
    for layer in sorted(layers, key=lambda l: l.z_index):
        if layer.shape != (height, width):
            raise StructuralError(f"layer {layer.id!r} does not match the {width}x{height} canvas")
        canvas = _over(layer.pixels, canvas)
    return canvas


def composite(document: Document) -> np.ndarray:
    """Render the document bottom-to-top over a transparent canvas."""
    return composite_layers(document.layers, document.height, document.width)


def min_alpha_for(threshold) -> int:
    """Smallest 8-bit alpha whose value/255 is >= threshold, compared exactly."""
    t = Fraction(threshold)
    if t < 0 or t > 1:
        raise PreconditionError(f"threshold must lie in [0, 1], got {threshold}")
    return math.ceil(t * 255)


def alpha_mask(layer: Layer, threshold=0.5) -> Mask:
    return Mask(layer.alpha >= min_alpha_for(threshold), source_layer=layer.id)


def apply_layer_edit(original: Layer, edited_pixels) -> Layer:
    """Keep the editor's colours only where the original layer was visible.

    Inside the original alpha support the result takes the edited RGB with
    the original alpha; everywhere else the original (transparent) pixel is
    restored.
    """
    edited = check_rgba(edited_pixels, "edited raster")
    if edited.shape != original.pixels.shape:
        raise StructuralError(
            f"edited raster {edited.shape} does not match layer {original.id!r} {original.pixels.shape}"
        )
    support = original.alpha > 0
    out = np.array(original.pixels)
    out[support, :3] = edited[support, :3]
    return dataclasses.replace(original, pixels=out)


def replace_layers(document: Document, edits: Mapping[str, Layer]) -> Document:
    known = set(document.layer_ids)
    for layer_id in edits:
        if layer_id not in known:
            raise KeyError(f"unknown layer id {layer_id!r}")
    layers = []
    for layer in document.layers:
        new = edits.get(layer.id)
        if new is None:
            layers.append(layer)
            continue
        if new.shape != layer.shape:
            raise StructuralError(f"replacement for {layer.id!r} changes raster size")
        if new.z_index != layer.z_index:
            new = dataclasses.replace(new, z_index=layer.z_index)
        layers.append(new)
    return Document(document.width, document.height, tuple(layers))
