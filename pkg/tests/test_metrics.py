import pytest

from layerdoc.document import BenchmarkInstance, Rect
from layerdoc.exceptions import PreconditionError
from layerdoc.judge import ScriptedBackend
from layerdoc.metrics import (
    NOT_APPLICABLE,
    corpus_mean,
    default_text_regions,
    instruction_following,
    layer_decision_accuracy,
    text_rendering,
)

from conftest import solid, two_layer_instance

EDITED = solid(8, 8, (0, 0, 0, 255))


def test_instruction_following_two_of_three(qa3_instance):
    backend = ScriptedBackend({"answer_binary": {"Is the background grey?": "no", "*": "yes"}})
    detail = []
    assert instruction_following(qa3_instance, EDITED, backend, detail=detail) == pytest.approx(66.67, abs=0.005)
    assert [d["correct"] for d in detail] == [True, True, False]


@pytest.mark.parametrize("answer, expected", [("yes", 100.0), ("no", 0.0)])
def test_instruction_following_extremes(qa3_instance, answer, expected):
    assert instruction_following(qa3_instance, EDITED, ScriptedBackend({"answer_binary": answer})) == expected


def test_instruction_following_generates_questions():
    backend = ScriptedBackend({"generate_qa": "Q: Hello?\nA: yes", "answer_binary": "yes"})
    assert instruction_following(two_layer_instance(), EDITED, backend) == 100.0


def test_instruction_following_needs_pairs():
    inst = two_layer_instance()
    empty = BenchmarkInstance(inst.document, inst.instruction, frozenset(), {}, (), "none")
    with pytest.raises(PreconditionError):
        instruction_following(empty, EDITED, ScriptedBackend({"answer_binary": "yes"}))


def test_text_rendering_mean_of_verdicts(instance):
    backend = ScriptedBackend({"ocr_verify": {"a": "1", "b": "0.5"}})
    regions = [("a", Rect(0, 0, 2, 2)), ("b", Rect(2, 2, 2, 2))]
    assert text_rendering(instance, EDITED, regions, backend) == 75.0


def test_text_rendering_single_zero(instance):
    assert text_rendering(instance, EDITED, [Rect(0, 0, 8, 8)], ScriptedBackend({"ocr_verify": "0"})) == 0.0


def test_text_rendering_not_applicable_without_text_edits(instance):
    image_only = BenchmarkInstance(instance.document, "x", frozenset({"bg"}), {"bg": "darker"}, None, "img")
    assert text_rendering(image_only, EDITED, [], ScriptedBackend({})) is NOT_APPLICABLE


def test_text_rendering_needs_regions(instance):
    with pytest.raises(PreconditionError):
        text_rendering(instance, EDITED, [], ScriptedBackend({"ocr_verify": "1"}))


def test_default_regions_are_gold_text_boxes(instance):
    assert default_text_regions(instance) == [("title", Rect(1, 1, 6, 3))]


@pytest.mark.parametrize(
    "gold, predicted, expected",
    [({"a", "c"}, {"a", "b", "c"}, 200 / 3), ({"a", "c"}, {"a", "c"}, 100.0), ({"a", "c"}, {"b"}, 0.0)],
)
def test_layer_decision_accuracy(gold, predicted, expected):
    assert layer_decision_accuracy(gold, predicted, {"a", "b", "c"}) == pytest.approx(expected)


def test_layer_decision_accuracy_errors():
    with pytest.raises(PreconditionError):
        layer_decision_accuracy(set(), set(), set())
    with pytest.raises(PreconditionError):
        layer_decision_accuracy({"z"}, set(), {"a"})


def test_corpus_mean_skips_not_applicable():
    assert corpus_mean([50.0, None, 100.0]) == 75.0
    assert corpus_mean([None]) is None
