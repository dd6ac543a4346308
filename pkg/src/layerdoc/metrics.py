"""Judge-backed criteria: instruction following, text rendering, aesthetics,
plus layer decision accuracy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .document import BenchmarkInstance, Rect, alpha_mask
from .exceptions import PreconditionError
from .judge import DEFAULT_PROMPTS, Backend, PromptSet, answer_binary, generate_qa, ocr_and_verify

# Returned by text_rendering when no text layer is edited.
NOT_APPLICABLE = None


@dataclass
class MetricReport:
    instruction_following: float
    text_rendering: float | None
    aesthetics: float
    layout_consistency: float
    layer_decision_accuracy: float | None = None
    per_layer_detail: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instruction_following": self.instruction_following,
            "layout_consistency": self.layout_consistency,
            "aesthetics": self.aesthetics,
            "text_rendering": self.text_rendering,
            "layer_decision_accuracy": self.layer_decision_accuracy,
            "per_layer_detail": self.per_layer_detail,
        }


def instruction_following(
    instance: BenchmarkInstance,
    edited,
    backend: Backend,
    prompts: PromptSet = DEFAULT_PROMPTS,
    qa_backend: Backend | None = None,
    detail: list | None = None,
) -> float:
    """Percentage of QA pairs whose judged answer matches the expected one."""
    pairs = generate_qa(instance, qa_backend or backend, prompts)
    if not pairs:
        raise PreconditionError(f"instance {instance.id!r} yields no QA pairs")
    correct = 0
    for qa in pairs:
        verdict = answer_binary(edited, qa.question, backend, prompts, context=instance.id)
        ok = verdict.value == qa.expected
        correct += ok
        if detail is not None:
            detail.append(
                {"metric": "instruction_following", "layer": qa.target_layer, "question": qa.question,
                 "expected": qa.expected, "answer": verdict.value, "correct": ok}
            )
    return 100.0 * correct / len(pairs)


def edits_text(instance: BenchmarkInstance) -> bool:
    return any(instance.document.layer(lid).kind == "text" for lid in instance.gold_relevant)


def default_text_regions(instance: BenchmarkInstance, threshold=0.5) -> list[tuple[str, Rect]]:
    """Bounding boxes of the gold-edited text layers' alpha masks."""
    regions = []
    for layer in instance.document.layers:
        if layer.id in instance.gold_relevant and layer.kind == "text":
            box = alpha_mask(layer, threshold).bbox()
            if box is not None:
                regions.append((layer.id, box))
    return regions


def text_rendering(
    instance: BenchmarkInstance,
    edited,
    regions,
    backend: Backend,
    prompts: PromptSet = DEFAULT_PROMPTS,
    detail: list | None = None,
) -> float | None:
    """Mean tristate OCR verdict over ``regions`` as a percentage.

    ``regions`` holds ``Rect`` or ``(id, Rect)`` items. Returns
    :data:`NOT_APPLICABLE` when the instance edits no text layer.
    """
    if not edits_text(instance):
        return NOT_APPLICABLE
    items = [(r[0], Rect(*r[1])) if len(r) == 2 else (None, Rect(*r)) for r in regions]
    if not items:
        raise PreconditionError(f"instance {instance.id!r} edits text but has no text regions")
    scores = []
    for rid, rect in items:
        verdict = ocr_and_verify(edited, Rect(*rect), instance.instruction, backend, prompts, context=instance.id, key=rid)
        scores.append(verdict.value)
        if detail is not None:
            detail.append({"metric": "text_rendering", "region": rid, "rect": list(rect), "verdict": verdict.value})
    return 100.0 * float(np.mean(scores))


def layer_decision_accuracy(gold, predicted, all_layers) -> float:
    """Per-layer agreement between predicted and gold edit/no-edit decisions."""
    gold, predicted, all_layers = set(gold), set(predicted), set(all_layers)
    if not all_layers:
        raise PreconditionError("layer decision accuracy needs at least one layer")
    if not gold <= all_layers or not predicted <= all_layers:
        raise PreconditionError("gold and predicted must be subsets of all_layers")
    agree = sum((l in gold) == (l in predicted) for l in all_layers)
    return 100.0 * agree / len(all_layers)


def corpus_mean(values) -> float | None:
    """Unweighted mean over instances, skipping not-applicable entries."""
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None
