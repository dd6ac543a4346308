"""Toolkit for instruction-driven editing of layered design documents.

Covers the layered-document model, layout/judge-backed evaluation, the
gated composite score, the reason-then-edit agent, reasoner rewards and
dataset construction.
"""
from .agent import IdentityEditor, ReasonerOutput, ScriptedEditor, parse_reasoner, run_agent
from .assignment import hungarian_max, iou
from .datagen import EditStep, consolidate, match_steps
from .document import (
    BenchmarkInstance,
    Document,
    Layer,
    Mask,
    QAPair,
    Rect,
    alpha_mask,
    apply_layer_edit,
    composite,
    replace_layers,
)
from .judge import JudgeBackend, ScriptedBackend
from .layout import LayoutReport, LayoutWeights, layout_consistency, layout_consistency_masks
from .metrics import instruction_following, layer_decision_accuracy, text_rendering
from .reward import bleu, format_reward, group_advantages, grpo_surrogate, per_layer_reward
from .scoring import CompositeScorer, MildeWeights, RawScores, dw_sum, gate, geo_mean, hcore_sup, milde_score, spearman

__version__ = "0.1.0"

__all__ = [
    "BenchmarkInstance", "Document", "Layer", "Mask", "QAPair", "Rect",
    "alpha_mask", "apply_layer_edit", "composite", "replace_layers",
    "hungarian_max", "iou",
    "LayoutReport", "LayoutWeights", "layout_consistency", "layout_consistency_masks",
    "JudgeBackend", "ScriptedBackend",
    "instruction_following", "layer_decision_accuracy", "text_rendering",
    "CompositeScorer", "MildeWeights", "RawScores", "dw_sum", "gate", "geo_mean", "hcore_sup", "milde_score", "spearman",
    "IdentityEditor", "ReasonerOutput", "ScriptedEditor", "parse_reasoner", "run_agent",
    "bleu", "format_reward", "group_advantages", "grpo_surrogate", "per_layer_reward",
    "EditStep", "consolidate", "match_steps",
]
