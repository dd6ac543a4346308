import numpy as np
import pytest

from layerdoc.datagen import EditStep, classify_steps, consolidate, layer_instructions, match_steps
from layerdoc.document import Document, composite
from layerdoc.judge import ScriptedBackend

from conftest import random_document, rect_layer


def fixture_doc():
    bg = rect_layer("bg", 0, 10, 10, (0, 0, 10, 10), (240, 240, 240, 255), "image")
    t1 = rect_layer("t1", 1, 10, 10, (0, 0, 4, 2), (0, 0, 0, 255), "text")
    t2 = rect_layer("t2", 2, 10, 10, (0, 6, 4, 2), (200, 0, 0, 255), "text")
    return Document(10, 10, (bg, t1, t2))


def test_disjoint_texts_merge():
    doc = fixture_doc()
    out = consolidate(doc)
    assert [l.id for l in out.layers] == ["bg", "t1+t2"]
    assert out.layers[1].kind == "text" and out.layers[1].z_index == 1
    assert np.array_equal(composite(out), composite(doc))


def test_overlapping_texts_stay_apart():
    bg = rect_layer("bg", 0, 10, 10, (0, 0, 10, 10), (240, 240, 240, 255), "image")
    t1 = rect_layer("t1", 1, 10, 10, (0, 0, 5, 5), (0, 0, 0, 255), "text")
    t2 = rect_layer("t2", 2, 10, 10, (3, 3, 5, 5), (200, 0, 0, 128), "text")
    assert len(consolidate(Document(10, 10, (bg, t1, t2))).layers) == 3


def test_kinds_from_classifier():
    doc = fixture_doc()
    backend = ScriptedBackend({"classify_layer": {"bg": "image", "t1": "text", "t2": "decoration"}})
    assert len(consolidate(doc, backend).layers) == 3


def test_merge_never_jumps_under_an_overlapping_layer():
    # t2 would sink below the red image it overlaps if merged into t1
    t1 = rect_layer("t1", 0, 10, 10, (0, 0, 2, 2), (0, 0, 0, 255), "text")
    img = rect_layer("img", 1, 10, 10, (4, 4, 4, 4), (255, 0, 0, 255), "image")
    t2 = rect_layer("t2", 2, 10, 10, (5, 5, 2, 2), (0, 0, 255, 255), "text")
    doc = Document(10, 10, (t1, img, t2))
    out = consolidate(doc)
    assert len(out.layers) == 3
    assert np.array_equal(composite(out), composite(doc))


@pytest.mark.parametrize("overlap", ["bbox", "alpha"])
def test_render_preserved_on_random_documents(rng, overlap):
    for _ in range(60):
        doc = random_document(rng, int(rng.integers(2, 8)), 12, 12)
        out = consolidate(doc, overlap=overlap)
        assert len(out.layers) <= len(doc.layers)
        assert np.array_equal(composite(out), composite(doc))


def test_idempotent(rng):
    for _ in range(30):
        once = consolidate(random_document(rng, 6, 12, 12))
        assert consolidate(once) == once


def test_bad_overlap_mode():
    with pytest.raises(ValueError):
        consolidate(fixture_doc(), overlap="fuzzy")


def test_single_step_always_yes():
    doc = Document(10, 10, (fixture_doc().layers[1],))
    steps = [EditStep("rename", "text_edit")]
    out = match_steps(steps, doc, ScriptedBackend({"step_applies": "yes"}))
    assert out[0].assigned_layer == "t1"


def test_image_step_without_image_layers_is_unassigned():
    doc = Document(10, 10, fixture_doc().layers[1:])
    backend = ScriptedBackend({"step_applies": "yes"})
    assert match_steps([EditStep("swap photo", "image_edit")], doc, backend)[0].assigned_layer is None
    assert backend.calls == []


def test_sequential_trace():
    doc = fixture_doc()
    backend = ScriptedBackend({"step_applies": {"s1|t2": "yes", "s2|t1": "yes", "*": "no"}})
    trace = []
    out = match_steps([EditStep("s1", "text_edit"), EditStep("s2", "text_edit")], doc, backend, trace=trace)
    assert [s.assigned_layer for s in out] == ["t2", "t1"]
    assert trace == [("s1", "t1", False), ("s1", "t2", True), ("s2", "t1", True)]


def test_unclassified_step_is_rejected():
    with pytest.raises(ValueError):
        match_steps([EditStep("x")], fixture_doc(), ScriptedBackend({}))


def test_classify_and_join():
    steps = classify_steps(["a", EditStep("b", "image_edit")], ScriptedBackend({"classify_step": "text_edit"}))
    assert [s.category for s in steps] == ["text_edit", "image_edit"]
    joined = layer_instructions([EditStep("a", "text_edit", "t1"), EditStep("b", "text_edit", "t1"), EditStep("c")])
    assert joined == {"t1": "a\nb"}
