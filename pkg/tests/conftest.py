import numpy as np
import pytest

from layerdoc.document import BenchmarkInstance, Document, Layer, Mask, QAPair


def solid(h, w, rgba):
    out = np.empty((h, w, 4), dtype=np.uint8)
    out[...] = rgba
    return out


def rect_layer(layer_id, z, h, w, box, rgba, kind="image"):
    """Layer painted ``rgba`` inside ``box`` = (x, y, w, h), transparent elsewhere."""
    px = np.zeros((h, w, 4), dtype=np.uint8)
    x, y, bw, bh = box
    px[y : y + bh, x : x + bw] = rgba
    return Layer(layer_id, px, z, kind)


def rect_mask(h, w, box, source=None):
    bits = np.zeros((h, w), dtype=bool)
    x, y, bw, bh = box
    bits[y : y + bh, x : x + bw] = True
    return Mask(bits, source)


def random_layer(rng, layer_id, z, h, w, kind="image", p_hole=0.4):
    """Random RGBA layer with a random rectangular support and ragged alpha."""
    px = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
    keep = np.zeros((h, w), dtype=bool)
    x0, y0 = rng.integers(0, w), rng.integers(0, h)
    x1, y1 = rng.integers(x0 + 1, w + 1), rng.integers(y0 + 1, h + 1)
    keep[y0:y1, x0:x1] = True
    keep &= rng.random((h, w)) > p_hole * rng.random()
    px[~keep] = 0
    return Layer(layer_id, px, z, kind)


def random_document(rng, n_layers, h=12, w=12, kinds=("text", "image", "decoration")):
    layers = [random_layer(rng, f"L{i}", i, h, w, kinds[int(rng.integers(len(kinds)))]) for i in range(n_layers)]
    return Document(w, h, tuple(layers))


def two_layer_instance(instance_id="inst", qa=None):
    """Opaque image background plus a red text block; the text layer is the gold edit."""
    bg = Layer("bg", solid(8, 8, (200, 200, 200, 255)), 0, "image")
    title = rect_layer("title", 1, 8, 8, (1, 1, 6, 3), (255, 0, 0, 255), "text")
    doc = Document(8, 8, (bg, title))
    return BenchmarkInstance(
        doc,
        "make the title say hello",
        frozenset({"title"}),
        {"title": "change the title text to hello"},
        qa,
        instance_id,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def instance():
    return two_layer_instance()


@pytest.fixture
def qa3_instance():
    qa = (
        QAPair("Is the title hello?", "yes", "title"),
        QAPair("Is the title red?", "yes", "title"),
        QAPair("Is the background grey?", "yes", "bg"),
    )
    return two_layer_instance("qa3", qa)


def five_instance_corpus(root):
    """Small synthetic corpus: varied layer stacks, gold plans and QA pairs."""
    from layerdoc.manifest import save_manifest

    rng = np.random.default_rng(7)
    instances = []
    for n in range(5):
        bg = Layer("bg", solid(10, 10, (230, 230, 230, 255)), 0, "image")
        title = rect_layer("title", 1, 10, 10, (1, 1, 8, 2), (0, 0, 0, 255), "text")
        logo = rect_layer("logo", 2, 10, 10, (int(rng.integers(0, 5)), 5, 4, 4), (200, 30, 30, 255), "decoration")
        doc = Document(10, 10, (bg, title, logo))
        gold = [{"title"}, {"logo"}, {"title", "logo"}, {"bg"}, {"title"}][n]
        plans = {lid: f"update {lid} for variant {n}" for lid in gold}
        qa = tuple(QAPair(f"Was {lid} updated?", "yes", lid) for lid in sorted(gold))
        inst = BenchmarkInstance(doc, f"variant {n}", frozenset(gold), plans, qa, f"doc{n}")
        save_manifest(inst, root / inst.id)
        instances.append(inst)
    return instances


SCRIPTED_CONFIG = {
    "backends": {
        "judge": {
            "kind": "scripted_mock",
            "script": {"answer_binary": "yes", "ocr_verify": "1", "aesthetics": "6.5"},
        },
        "reasoner": {"kind": "scripted_mock", "oracle": True},
        "editor": {"kind": "scripted_mock", "fill": {"*": [0, 128, 0, 255]}},
    }
}
