"""Dataset construction: same-kind layer consolidation and step-to-layer matching."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .document import Document, Layer, composite_layers
from .judge import DEFAULT_PROMPTS, Backend, PromptSet, classify_layer, classify_step, step_applies

STEP_KINDS = {"text_edit": ("text",), "image_edit": ("image", "decoration")}


@dataclass(frozen=True)
class EditStep:
    text: str
    category: str | None = None
    assigned_layer: str | None = None


# ---------------------------------------------------------------------------
# Consolidation
# ---------------------------------------------------------------------------


def _overlaps(a: Layer, b: Layer, mode: str) -> bool:
    if mode == "alpha":
        return bool(np.any((a.alpha > 0) & (b.alpha > 0)))
    ba, bb = a.support_bbox(), b.support_bbox()
    return ba is not None and bb is not None and ba.intersects(bb)


def _merge(group: list[Layer], height: int, width: int) -> Layer:
    if len(group) == 1:
        return group[0]
    pixels = composite_layers(group, height, width)
    merged = Layer("+".join(l.id for l in group), pixels, group[0].z_index, group[0].kind)
    return dataclasses.replace(merged, bbox=merged.support_bbox())


def _consolidate_once(layers: list[Layer], height: int, width: int, overlap: str) -> list[Layer]:
    groups: list[list[Layer]] = []
    group_of: dict[str, int] = {}
    for layer in layers:  # ascending z
        target = None
        for gi, group in enumerate(groups):
            if group[0].kind != layer.kind:
                continue
            if any(_overlaps(layer, m, overlap) for m in group):
                continue
            # Joining moves the layer down to the group's z position; every
            # layer it would then jump under must be disjoint from it.
            pos = group[0].z_index
            crossed = (
                other
                for other in layers
                if pos < other.z_index < layer.z_index and groups[group_of[other.id]][0].z_index > pos
            )
            if any(_overlaps(layer, other, overlap) for other in crossed):
                continue
            target = gi
            break
        if target is None:
            groups.append([layer])
            group_of[layer.id] = len(groups) - 1
        else:
            groups[target].append(layer)
            group_of[layer.id] = target
    return [_merge(g, height, width) for g in groups]


def consolidate(
    document: Document,
    backend: Backend | None = None,
    overlap: str = "bbox",
    prompts: PromptSet = DEFAULT_PROMPTS,
) -> Document:
    """Merge pairwise non-overlapping layers of the same kind.

    Layers are first labelled text/decoration/image by ``backend`` (the
    existing ``kind`` is kept when no backend is given). A merged layer sits
    at the lowest z of its members and holds their composite, so the
    rendered document is unchanged bit for bit. ``overlap`` selects
    bounding-box ("bbox") or per-pixel ("alpha") overlap testing. Passes
    repeat until the layer count stops shrinking.
    """
    if overlap not in ("bbox", "alpha"):
        raise ValueError(f"overlap must be 'bbox' or 'alpha', got {overlap!r}")
    layers = list(document.layers)
    if backend is not None:
        layers = [dataclasses.replace(l, kind=classify_layer(l, backend, prompts).value) for l in layers]
    while True:
        merged = _consolidate_once(layers, document.height, document.width, overlap)
        if len(merged) == len(layers):
            break
        layers = merged
    return Document(document.width, document.height, tuple(layers))


# ---------------------------------------------------------------------------
# Step matching
# ---------------------------------------------------------------------------


def classify_steps(steps, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> list[EditStep]:
    out = []
    for step in steps:
        step = step if isinstance(step, EditStep) else EditStep(step)
        if step.category is None:
            step = dataclasses.replace(step, category=classify_step(step.text, backend, prompts, context).value)
        out.append(step)
    return out


def match_steps(
    steps: list[EditStep],
    document: Document,
    backend: Backend,
    prompts: PromptSet = DEFAULT_PROMPTS,
    context: str = "",
    trace: list | None = None,
) -> list[EditStep]:
    """Assign each classified step to the first compatible layer it applies to.

    Steps are handled in order; candidate layers of a compatible kind are
    visited in ascending z and the judge is asked whether the step applies.
    A layer stays available after being matched, so several steps may land
    on the same layer. Steps with no match keep ``assigned_layer=None``.
    """
    out = []
    for step in steps:
        if step.category not in STEP_KINDS:
            raise ValueError(f"step {step.text!r} is not classified (category={step.category!r})")
        assigned = None
        for layer in document.layers:
            if layer.kind not in STEP_KINDS[step.category]:
                continue
            verdict = step_applies(step.text, layer, backend, prompts, context)
            if trace is not None:
                trace.append((step.text, layer.id, verdict.value))
            if verdict.value:
                assigned = layer.id
                break
        out.append(dataclasses.replace(step, assigned_layer=assigned))
    return out


def layer_instructions(steps: list[EditStep]) -> dict[str, str]:
    """Join the steps assigned to each layer, newline-separated, in step order."""
    grouped: dict[str, list[str]] = {}
    for step in steps:
        if step.assigned_layer is not None:
            grouped.setdefault(step.assigned_layer, []).append(step.text)
    return {lid: "\n".join(texts) for lid, texts in grouped.items()}
