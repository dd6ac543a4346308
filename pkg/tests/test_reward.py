import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerdoc.agent import ReasonerOutput, format_reasoner
from layerdoc.exceptions import PreconditionError
from layerdoc.reward import (
    bleu,
    format_reward,
    group_advantages,
    grpo_surrogate,
    per_layer_reward,
    reward_from_text,
    tokenize,
)

# nltk 3.10 sentence_bleu, SmoothingFunction().method2
BLEU_TITLE = 0.6511126026643229
BLEU_PARTIAL = 0.3005840818981024


def test_format_reward():
    assert format_reward("<think>t</think><decision>yes</decision><prompt>p</prompt>") == 1.0
    assert format_reward("<think>t<decision>yes</decision><prompt>p</prompt>") == 0.0
    assert format_reward("<think>t</think><decision>no</decision><prompt>p</prompt>") == 0.0


def test_case_table():
    ok_yes = ReasonerOutput("L", "t", True, "make it red")
    assert per_layer_reward(ok_yes, True, "make it red").total == 1.0
    assert per_layer_reward(ok_yes, False).total == 0.5
    assert per_layer_reward(None, True, "make it red").total == 0.0
    flagged = ReasonerOutput("L", "", False, error="missing_tag")
    assert per_layer_reward(flagged, False).total == 0.0


def test_correct_no_op_gets_full_prompt_credit():
    rb = per_layer_reward(ReasonerOutput("L", "t", False), False)
    assert (rb.r_f, rb.r_d, rb.r_p, rb.total) == (1.0, 1.0, 1.0, 1.0)


def test_partial_prompt_credit():
    rb = per_layer_reward(ReasonerOutput("L", "t", True, "change title to winter camp"), True, "change the title to winter camp")
    assert rb.r_p == pytest.approx(BLEU_TITLE, abs=1e-12)
    assert rb.total == pytest.approx((2 + BLEU_TITLE) / 3)


def test_gold_consistency_is_checked():
    with pytest.raises(PreconditionError):
        per_layer_reward(None, True)
    with pytest.raises(PreconditionError):
        per_layer_reward(None, False, "x")


def test_reward_from_text():
    assert reward_from_text(format_reasoner("t", True, "a b c d"), "L", True, "a b c d").total == 1.0
    assert reward_from_text("garbage", "L", False).total == 0.0


def test_bleu_reference_values():
    assert bleu("change title to winter camp", "change the title to winter camp") == pytest.approx(BLEU_TITLE, abs=1e-12)
    assert bleu("make the headline say winter camp now", "change the headline to winter camp") == pytest.approx(BLEU_PARTIAL, abs=1e-12)


def test_bleu_identity_and_disjoint():
    assert bleu("Change the title, please!", "change the title please") == 1.0
    assert bleu("alpha beta gamma", "delta epsilon") == 0.0
    assert bleu("", "anything") == 0.0
    assert tokenize("Hello, World!") == ["hello", "world"]


words = st.lists(st.sampled_from(["red", "blue", "title", "logo", "make", "the", "bigger"]), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_bleu_properties(a, b):
    x, y = " ".join(a), " ".join(b)
    assert bleu(x, x) == pytest.approx(1.0)
    assert 0.0 <= bleu(x, y) <= 1.0


def test_group_advantages_examples():
    adv = group_advantages([1.0, 0.5, 0.0])
    assert adv == pytest.approx([1.2247, 0.0, -1.2247], abs=1e-4)
    mean, sd = statistics.mean([1.0, 0.5, 0.0]), statistics.pstdev([1.0, 0.5, 0.0])
    assert adv == pytest.approx([(r - mean) / sd for r in (1.0, 0.5, 0.0)], abs=1e-12)
    assert group_advantages([0.3, 0.3, 0.3]) == [0.0, 0.0, 0.0]
    assert group_advantages([1, 0]) == pytest.approx([1.0, -1.0])
    with pytest.raises(PreconditionError):
        group_advantages([1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=16))
def test_group_advantages_are_centred(rewards):
    adv = group_advantages(rewards)
    assert abs(sum(adv)) <= 1e-6 * len(adv)


@pytest.mark.parametrize(
    "ratio, adv, expected",
    [(1.0, 2.0, 2.0), (1.5, 1.0, 1.2), (0.5, -1.0, -0.8), (0.5, 1.0, 0.5), (1.5, -1.0, -1.5)],
)
def test_surrogate_clip_cases(ratio, adv, expected):
    assert grpo_surrogate(ratio, adv, 0.2) == pytest.approx(expected)


def test_surrogate_kl_and_domain():
    assert grpo_surrogate(1.0, 1.0, 0.2, kl=0.5, beta=0.1) == pytest.approx(0.95)
    with pytest.raises(PreconditionError):
        grpo_surrogate(0.0, 1.0)
    with pytest.raises(PreconditionError):
        grpo_surrogate(1.0, 1.0, kl=-1.0, beta=0.1)
