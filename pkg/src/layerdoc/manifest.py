"""On-disk formats: instance manifests, external mask sets and region files.

A corpus directory holds one sub-directory per instance::

    corpus/
      doc-001/
        manifest.json
        layers/title.png ...

``manifest.json`` (schema version 1)::

    {
      "schema_version": 1,
      "id": "doc-001",
      "width": 64, "height": 48,
      "layers": [{"id": "title", "z": 0, "kind": "text",
                  "png": "layers/title.png", "bbox": [x, y, w, h] | null}],
      "instruction": "...",
      "gold_relevant": ["title"],
      "gold_layer_instructions": {"title": "..."},
      "qa_pairs": [{"question": "...", "expected": "yes", "target_layer": "title"}],
      "steps": ["..."],
      "edited_masks": "masks/",
      "text_regions": "regions.txt"
    }

Only ``schema_version``, ``id``, ``width``, ``height``, ``layers`` and
``instruction`` are required. Paths are relative to the manifest.

External mask set: a directory with binary PNG masks plus ``index.json``
mapping file name to mask id. Region file: one ``id x y w h`` per line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .document import LAYER_KINDS, BenchmarkInstance, Document, Layer, Mask, QAPair, Rect
from .exceptions import ManifestError
from .pngio import read_mask, read_rgba, write_mask, write_rgba

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "id", "width", "height", "layers", "instruction"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "minLength": 1},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "instruction": {"type": "string"},
        "layers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "z", "kind", "png"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "z": {"type": "integer"},
                    "kind": {"enum": list(LAYER_KINDS)},
                    "png": {"type": "string"},
                    "bbox": {
                        "oneOf": [
                            {"type": "null"},
                            {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
                        ]
                    },
                },
                "additionalProperties": False,
            },
        },
        "gold_relevant": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "gold_layer_instructions": {"type": "object", "additionalProperties": {"type": "string"}},
        "qa_pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["question", "expected", "target_layer"],
                "properties": {
                    "question": {"type": "string", "minLength": 1},
                    "expected": {"enum": ["yes", "no"]},
                    "target_layer": {"type": "string"},
                },
            },
        },
        "steps": {"type": "array", "items": {"type": "string"}},
        "edited_masks": {"type": "string"},
        "text_regions": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass
class ManifestEntry:
    """A loaded instance plus the optional side inputs its manifest points to."""

    instance: BenchmarkInstance
    root: Path
    steps: list[str] | None = None
    edited_masks: Path | None = None
    text_regions: Path | None = None
    raw: dict = field(default_factory=dict)


def validate_manifest(data: dict, where="manifest") -> None:
    try:
        jsonschema.validate(data, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ManifestError(f"{where}: {exc.message} (at {path or '<root>'})") from None


def load_manifest(path) -> ManifestEntry:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from None
    validate_manifest(data, str(path))
    root = path.parent

    layers = []
    for entry in data["layers"]:
        png = root / entry["png"]
        if not png.is_file():
            raise ManifestError(f"{path}: layer {entry['id']!r} references missing file {entry['png']}")
        bbox = entry.get("bbox")
        layers.append(Layer(entry["id"], read_rgba(png), entry["z"], entry["kind"], Rect(*bbox) if bbox else None))
    try:
        document = Document(data["width"], data["height"], tuple(layers))
        qa = data.get("qa_pairs")
        instance = BenchmarkInstance(
            document=document,
            instruction=data["instruction"],
            gold_relevant=frozenset(data.get("gold_relevant", [])),
            gold_layer_instructions=data.get("gold_layer_instructions", {}),
            qa_pairs=None if qa is None else tuple(QAPair(**q) for q in qa),
            id=data["id"],
        )
    except (ValueError, KeyError) as exc:
        raise ManifestError(f"{path}: {exc}") from None

    def optional_path(key):
        if key not in data:
            return None
        p = root / data[key]
        if not p.exists():
            raise ManifestError(f"{path}: {key} references missing path {data[key]}")
        return p

    return ManifestEntry(
        instance,
        root,
        steps=data.get("steps"),
        edited_masks=optional_path("edited_masks"),
        text_regions=optional_path("text_regions"),
        raw=data,
    )


def load_corpus(directory) -> list[ManifestEntry]:
    """All manifests below ``directory``, sorted by instance id."""
    directory = Path(directory)
    if (directory / MANIFEST_NAME).is_file():
        paths = [directory / MANIFEST_NAME]
    else:
        paths = sorted(directory.glob(f"*/{MANIFEST_NAME}"))
    entries = [load_manifest(p) for p in paths]
    ids = [e.instance.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"duplicate instance ids in {directory}")
    return sorted(entries, key=lambda e: e.instance.id)


def manifest_dict(instance: BenchmarkInstance, layer_files: dict[str, str], **extra) -> dict:
    data = {
        "schema_version": SCHEMA_VERSION,
        "id": instance.id,
        "width": instance.document.width,
        "height": instance.document.height,
        "layers": [
            {
                "id": l.id,
                "z": l.z_index,
                "kind": l.kind,
                "png": layer_files[l.id],
                "bbox": list(l.bbox) if l.bbox is not None else None,
            }
            for l in instance.document.layers
        ],
        "instruction": instance.instruction,
        "gold_relevant": sorted(instance.gold_relevant),
        "gold_layer_instructions": dict(sorted(instance.gold_layer_instructions.items())),
    }
    if instance.qa_pairs is not None:
        data["qa_pairs"] = [
            {"question": q.question, "expected": q.expected, "target_layer": q.target_layer} for q in instance.qa_pairs
        ]
    data.update({k: v for k, v in extra.items() if v is not None})
    return data


def _safe_name(layer_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in layer_id)


def save_manifest(instance: BenchmarkInstance, directory, **extra) -> Path:
    """Write ``instance`` as ``directory/manifest.json`` plus one PNG per layer."""
    directory = Path(directory)
    files = {}
    for i, layer in enumerate(instance.document.layers):
        rel = f"layers/{i:02d}_{_safe_name(layer.id)}.png"
        write_rgba(directory / rel, layer.pixels)
        files[layer.id] = rel
    data = manifest_dict(instance, files, **extra)
    validate_manifest(data)
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path


def read_mask_set(directory) -> list[Mask]:
    directory = Path(directory)
    index_path = directory / "index.json"
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{index_path}: {exc}") from None
    if not isinstance(index, dict):
        raise ManifestError(f"{index_path}: expected an object mapping file name to mask id")
    return [Mask(read_mask(directory / name), str(mask_id)) for name, mask_id in sorted(index.items())]


def write_mask_set(masks: list[Mask], directory) -> None:
    directory = Path(directory)
    index = {}
    for i, mask in enumerate(masks):
        name = f"mask_{i:03d}.png"
        write_mask(directory / name, mask.bits)
        index[name] = mask.source_layer if mask.source_layer is not None else str(i)
    (directory / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")


def read_regions(path) -> list[tuple[str, Rect]]:
    regions = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ManifestError(f"{path}:{lineno}: expected 'id x y w h'")
        try:
            regions.append((parts[0], Rect(*(int(v) for v in parts[1:]))))
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: coordinates must be integers") from None
    return regions


def write_regions(regions, path) -> None:
    lines = [f"{rid} {r.x} {r.y} {r.w} {r.h}" for rid, r in regions]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_steps(path) -> list[str]:
    return [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]


@dataclass
class EditedOutput:
    raster: object  # RGBA array
    layered: Document | None = None


def load_edited_output(outputs_dir, instance_id: str) -> EditedOutput | None:
    """Find an editor's output for one instance.

    Accepted layouts: ``<outputs>/<id>.png`` (flat) or ``<outputs>/<id>/``
    with ``composite.png`` and optionally a layered ``manifest.json``.
    """
    outputs_dir = Path(outputs_dir)
    flat = outputs_dir / f"{instance_id}.png"
    folder = outputs_dir / instance_id
    layered = None
    if (folder / MANIFEST_NAME).is_file():
        layered = load_manifest(folder).instance.document
    if (folder / "composite.png").is_file():
        return EditedOutput(read_rgba(folder / "composite.png"), layered)
    if flat.is_file():
        return EditedOutput(read_rgba(flat), layered)
    return None


def save_edited_output(outputs_dir, instance: BenchmarkInstance, document: Document, rendered) -> Path:
    folder = Path(outputs_dir) / instance.id
    edited = BenchmarkInstance(
        document, instance.instruction, instance.gold_relevant, instance.gold_layer_instructions,
        instance.qa_pairs, instance.id,
    )
    save_manifest(edited, folder)
    write_rgba(folder / "composite.png", rendered)
    return folder
