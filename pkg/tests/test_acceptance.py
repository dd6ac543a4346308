"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import contextlib
import itertools
import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from layerdoc.agent import ReasonerOutput
from layerdoc.assignment import assignment_weight, hungarian_max
from layerdoc.cli import main
from layerdoc.datagen import consolidate
from layerdoc.document import Document, Layer, apply_layer_edit, composite
from layerdoc.judge import ScriptedBackend
from layerdoc.layout import layout_consistency_masks
from layerdoc.metrics import instruction_following, layer_decision_accuracy, text_rendering
from layerdoc.reward import bleu, group_advantages, grpo_surrogate, per_layer_reward
from layerdoc.scoring import gate, spearman

from conftest import SCRIPTED_CONFIG, five_instance_corpus, random_document, rect_mask, solid
from test_document import scalar_stack


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def report(label):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"\nFAIL  {label}")
            raise
        with capsys.disabled():
            print(f"\nPASS  {label}")

    return report


def test_c01_composite_score_reproduction(tmp_path, capsys, criterion):
    with criterion("C1 composite score reproduces reference rows 15/16 (+-0.05) and 18/19 (+-0.10) in < 1 s"):
        raw = tmp_path / "raw.csv"
        raw.write_text(
            "row,IF,LC,A,TR\n15,25.46,36.24,4.66,39.67\n16,24.04,58.42,4.52,40.32\n"
            "18,13.29,90.15,4.32,27.52\n19,20.71,93.24,4.19,36.75\n"
        )
        start = time.perf_counter()
        assert main(["score", str(raw)]) == 0
        elapsed = time.perf_counter() - start
        lines = capsys.readouterr().out.splitlines()
        col = lines[0].split(",").index("milde")
        got = {l.split(",")[0]: float(l.split(",")[col]) for l in lines[1:5]}
        assert got["15"] == pytest.approx(25.60, abs=0.05)
        assert got["16"] == pytest.approx(27.10, abs=0.05)
        assert got["18"] == pytest.approx(16.10, abs=0.10)
        assert got["19"] == pytest.approx(25.90, abs=0.10)
        assert elapsed < 1.0


def test_c02_gate_endpoints_and_monotonicity(criterion):
    with criterion("C2 gate(0)=0, gate(1)=1 to 1e-12; strictly increasing on a 1000-point grid"):
        for tau in np.linspace(0.01, 0.99, 25):
            for k in (0.05, 0.5, 1, 5, 10, 30, 100):
                assert abs(gate(0.0, tau, k)) <= 1e-12
                assert abs(gate(1.0, tau, k) - 1.0) <= 1e-12
        grid = [gate(x) for x in np.linspace(0.0, 1.0, 1000)]
        assert all(b > a for a, b in zip(grid, grid[1:]))


def test_c03_hungarian_matches_exhaustive_search(criterion):
    with criterion("C3 Hungarian total equals permutation maximum on >=200 random matrices up to 6x6 in < 10 s"):
        rng = np.random.default_rng(3)
        start = time.perf_counter()
        for _ in range(240):
            n, m = map(int, rng.integers(1, 7, size=2))
            sim = rng.random((n, m))
            if n <= m:
                best = max(sum(sim[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
            else:
                best = max(sum(sim[p[j], j] for j in range(m)) for p in itertools.permutations(range(n), m))
            assert assignment_weight(sim, hungarian_max(sim)) == pytest.approx(best, abs=1e-9)
        assert time.perf_counter() - start < 10


def test_c04_layout_literal_formula(criterion):
    with criterion("C4 layout identity = 0.85, all-deleted clamps to 0, permutation invariant over >=50 cases"):
        rng = np.random.default_rng(4)

        def masks(k):
            out = []
            for _ in range(k):
                x, y = map(int, rng.integers(0, 14, size=2))
                out.append(rect_mask(16, 16, (x, y, int(rng.integers(1, 17 - x)), int(rng.integers(1, 17 - y)))))
            return out

        for _ in range(20):
            m = masks(int(rng.integers(1, 6)))
            assert layout_consistency_masks(m, m, 16, 16).score == pytest.approx(0.85, abs=1e-12)
        assert layout_consistency_masks(masks(3), [], 16, 16).score == 0.0
        for _ in range(60):
            orig, edit = masks(int(rng.integers(1, 6))), masks(int(rng.integers(0, 6)))
            base = layout_consistency_masks(orig, edit, 16, 16).score
            po = [orig[i] for i in rng.permutation(len(orig))]
            pe = [edit[i] for i in rng.permutation(len(edit))]
            assert layout_consistency_masks(po, pe, 16, 16).score == pytest.approx(base, abs=1e-12)


def test_c05_compositing_invariants(criterion):
    with criterion("C5 transparent identity, opaque dominance and scalar-oracle equality on >=100 random 8x8 stacks"):
        rng = np.random.default_rng(5)
        for _ in range(120):
            doc = random_document(rng, int(rng.integers(1, 5)), 8, 8)
            got = composite(doc)
            for y, x in itertools.product(range(8), range(8)):
                assert tuple(got[y, x]) == scalar_stack([tuple(int(v) for v in l.pixels[y, x]) for l in doc.layers])
            top = len(doc.layers)
            clear = Layer("clear", np.zeros((8, 8, 4), np.uint8), top)
            assert np.array_equal(composite(Document(8, 8, (*doc.layers, clear))), got)
            opaque = rng.integers(0, 256, (8, 8, 4), dtype=np.uint8)
            opaque[..., 3] = 255
            assert np.array_equal(composite(Document(8, 8, (*doc.layers, Layer("top", opaque, top)))), opaque)


@settings(max_examples=300, deadline=None)
@given(alpha=arrays(np.uint8, (6, 6)), edit=arrays(np.uint8, (6, 6, 4)))
def _edit_stays_inside_support(alpha, edit):
    px = np.zeros((6, 6, 4), np.uint8)
    px[..., 3] = alpha
    out = apply_layer_edit(Layer("l", px, 0), edit).pixels
    assert (out[alpha == 0, 3] == 0).all()


def test_c06_alpha_preserving_edit(criterion):
    with criterion("C6 edited pixels outside the original alpha support are fully transparent (property test)"):
        _edit_stays_inside_support()


def test_c07_reward_suite(criterion):
    with criterion("C7 reward case table, bleu(x,x)=1, group advantages within 1e-4, clipped surrogate cases"):
        yes = ReasonerOutput("L", "t", True, "recolor the logo")
        assert per_layer_reward(yes, True, "recolor the logo").total == 1.0
        assert per_layer_reward(yes, False).total == 0.5
        assert per_layer_reward(None, True, "recolor the logo").total == 0.0
        for text in ("a", "recolor the logo", "make the big headline say winter camp"):
            assert bleu(text, text) == 1.0
        assert group_advantages([1.0, 0.5, 0.0]) == pytest.approx([1.2247, 0.0, -1.2247], abs=1e-4)
        assert grpo_surrogate(1.0, 2.0, 0.2) == pytest.approx(2.0)
        assert grpo_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
        assert grpo_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)


def test_c08_end_to_end_determinism(tmp_path, criterion):
    with criterion("C8 agent run on a 5-instance scripted fixture: byte-identical report x3, decision accuracy 100"):
        corpus = tmp_path / "corpus"
        five_instance_corpus(corpus)
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(SCRIPTED_CONFIG))
        blobs = []
        for run, workers in enumerate(("1", "4", "2")):
            out = tmp_path / "out"
            assert main(["agent", "--manifests", str(corpus), "--outputs", str(out), "--config", str(config),
                         "--workers", workers, "--report", str(tmp_path / f"report{run}.json")]) == 0
            blobs.append((tmp_path / f"report{run}.json").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
        report = json.loads(blobs[0])
        assert report["corpus"]["n_ok"] == 5
        assert report["corpus"]["means"]["layer_decision_accuracy"] == 100.0


def test_c09_consolidation_preserves_render(criterion):
    with criterion("C9 composite(consolidate(d)) bit-equals composite(d) on >=50 random documents"):
        rng = np.random.default_rng(9)
        merged_any = False
        for _ in range(80):
            doc = random_document(rng, int(rng.integers(2, 9)), 12, 12)
            out = consolidate(doc)
            merged_any |= len(out.layers) < len(doc.layers)
            assert np.array_equal(composite(out), composite(doc))
        assert merged_any


def test_c10_mock_judge_substitutes(criterion, qa3_instance, instance):
    with criterion("C10 substitutes: mock-judge metric proportions and spearman identity/reversal/tie oracles"):
        edited = solid(8, 8, (0, 0, 0, 255))
        judge = ScriptedBackend({"answer_binary": {"Is the background grey?": "no", "*": "yes"}})
        assert instruction_following(qa3_instance, edited, judge) == pytest.approx(200 / 3)
        tr = ScriptedBackend({"ocr_verify": {"a": "1", "b": "0.5"}})
        assert text_rendering(instance, edited, [("a", (0, 0, 2, 2)), ("b", (2, 2, 2, 2))], tr) == 75.0
        assert layer_decision_accuracy({"a", "c"}, {"a", "b", "c"}, {"a", "b", "c"}) == pytest.approx(200 / 3)
        assert spearman([1, 2, 3, 4, 5], [2, 4, 6, 8, 10]) == 1.0
        assert spearman([1, 2, 3, 4, 5], [5, 4, 3, 2, 1]) == -1.0
        assert spearman([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(0.9486832980505139, abs=1e-12)
