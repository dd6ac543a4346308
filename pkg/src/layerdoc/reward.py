"""Per-layer reasoner rewards and GRPO advantage/surrogate arithmetic."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .agent import ReasonerOutput, parse_reasoner
from .exceptions import FormatError, PreconditionError

BLEU_MAX_N = 4
STD_FLOOR = 1e-8
_PUNCT = re.compile(r"[^\w\s]")


@dataclass(frozen=True)
class RewardBreakdown:
    r_f: float
    r_d: float
    r_p: float
    total: float


def format_reward(raw_text: str, layer_id: str = "") -> float:
    try:
        parse_reasoner(raw_text, layer_id)
    except FormatError:
        return 0.0
    return 1.0


def tokenize(text: str) -> list[str]:
    return _PUNCT.sub("", text.lower()).split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str) -> float:
    """Sentence BLEU-4 with brevity penalty.

    Unigram precision is unsmoothed; orders 2-4 use add-one on both the
    clipped match count and the candidate n-gram count. Text is lower-cased
    and stripped of punctuation, then split on whitespace.
    """
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand:
        return 0.0
    log_p = 0.0
    for n in range(1, BLEU_MAX_N + 1):
        c_counts, r_counts = _ngrams(cand, n), _ngrams(ref, n)
        matches = sum(min(c, r_counts[g]) for g, c in c_counts.items())
        total = sum(c_counts.values())
        if n > 1:
            matches, total = matches + 1, total + 1
        if matches == 0:
            return 0.0
        log_p += math.log(matches / total) / BLEU_MAX_N
    bp = 1.0 if len(cand) > len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return min(1.0, bp * math.exp(log_p))


def per_layer_reward(output: ReasonerOutput | None, gold_decision: bool, gold_prompt: str | None = None) -> RewardBreakdown:
    """Reward for one layer. ``output`` is ``None`` (or carries ``error``) on a format failure.

    A correct no-op earns full prompt credit, since there is no reference
    prompt to compare against.
    """
    if gold_decision and gold_prompt is None:
        raise PreconditionError("a positive gold decision needs a gold prompt")
    if not gold_decision and gold_prompt is not None:
        raise PreconditionError("a negative gold decision cannot carry a gold prompt")
    valid = output is not None and output.error is None
    r_f = 1.0 if valid else 0.0
    r_d = 1.0 if valid and output.decision == gold_decision else 0.0
    if r_d == 0.0:
        return RewardBreakdown(r_f, r_d, 0.0, (r_f + r_d) / 2.0)
    r_p = bleu(output.prompt or "", gold_prompt) if gold_decision else 1.0
    return RewardBreakdown(r_f, r_d, r_p, (r_f + r_d + r_p) / 3.0)


def reward_from_text(raw_text: str, layer_id: str, gold_decision: bool, gold_prompt: str | None = None) -> RewardBreakdown:
    try:
        output = parse_reasoner(raw_text, layer_id)
    except FormatError:
        output = None
    return per_layer_reward(output, gold_decision, gold_prompt)


def group_advantages(rewards) -> list[float]:
    """Group-normalised advantages using the population standard deviation."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise PreconditionError("group_advantages needs a group of at least two rewards")
    std = float(r.std())
    if std < STD_FLOOR:
        return [0.0] * len(r)
    return ((r - r.mean()) / std).tolist()


def grpo_surrogate(ratio: float, advantage: float, epsilon: float = 0.2, kl: float = 0.0, beta: float = 0.0) -> float:
    """Clipped policy-ratio objective for one token, minus the KL penalty."""
    if ratio <= 0:
        raise PreconditionError(f"ratio must be positive, got {ratio}")
    if kl < 0 or beta < 0:
        raise PreconditionError("kl and beta must be non-negative")
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage) - beta * kl
