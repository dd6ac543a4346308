"""Batch evaluation, agent and dataset-construction runs with JSON reports.

Reports are deterministic for a fixed config and deterministic backends:
rows are ordered by instance id, keys are sorted on output, and wall-clock
timings go to a separate ``timings.json`` next to the report.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .agent import HttpEditor, IdentityEditor, InstanceFailure, ScriptedEditor, format_reasoner, run_agent
from .datagen import classify_steps, consolidate, layer_instructions, match_steps
from .document import BenchmarkInstance, composite
from .exceptions import LayerdocError, ManifestError
from .judge import HttpChatBackend, JudgeBackend, PromptSet, aesthetics
from .layout import LayoutWeights, document_masks, layout_consistency_masks
from .manifest import (
    ManifestEntry,
    load_corpus,
    load_edited_output,
    read_mask_set,
    read_regions,
    read_steps,
    save_edited_output,
    save_manifest,
)
from .metrics import (
    MetricReport,
    corpus_mean,
    default_text_regions,
    instruction_following,
    layer_decision_accuracy,
    text_rendering,
)
from .pngio import read_rgba
from .scoring import AGGREGATORS, MildeWeights, RawScores

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
MASK_SOURCES = ("alpha", "external")
ENV_PREFIX = "LAYERDOC_"


@dataclass
class RunConfig:
    backends: dict = field(default_factory=dict)
    weights: MildeWeights = field(default_factory=MildeWeights)
    layout: LayoutWeights = field(default_factory=LayoutWeights)
    mask_threshold: float = 0.5
    normalize_layout: bool = False
    mask_source: str = "alpha"
    workers: int = 1
    overlap: str = "bbox"
    prompt_dir: str | None = None

    def __post_init__(self):
        if self.mask_source not in MASK_SOURCES:
            raise ValueError(f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.prompts = PromptSet.load(self.prompt_dir)

    @classmethod
    def from_sources(cls, file_config: dict | None = None, overrides: dict | None = None, environ=None) -> "RunConfig":
        """Merge environment < config file < CLI overrides."""
        environ = os.environ if environ is None else environ
        merged: dict[str, Any] = {}
        env_keys = {"workers": int, "mask_source": str, "normalize_layout": _parse_bool, "mask_threshold": float}
        for key, conv in env_keys.items():
            if ENV_PREFIX + key.upper() in environ:
                merged[key] = conv(environ[ENV_PREFIX + key.upper()])
        merged.update(file_config or {})
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(merged.get("weights"), dict):
            merged["weights"] = MildeWeights(**merged["weights"])
        if isinstance(merged.get("layout"), dict):
            merged["layout"] = LayoutWeights(**merged["layout"])
        return cls(**merged)

    def echo(self) -> dict:
        return {
            "weights": self.weights.to_dict(),
            "layout": asdict(self.layout),
            "mask_threshold": self.mask_threshold,
            "normalize_layout": self.normalize_layout,
            "mask_source": self.mask_source,
            "overlap": self.overlap,
            "prompt_hashes": self.prompts.hashes(),
            "aggregation": "unweighted mean of per-instance metrics; composite scores from corpus means",
        }


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# Backend construction
# ---------------------------------------------------------------------------


def build_judge(cfg: dict | None, default=None):
    if cfg is None:
        if default is not None:
            return default
        raise ValueError("missing judge backend configuration")
    return JudgeBackend(**cfg).build()


def build_reasoner(cfg: dict, entries: list[ManifestEntry]):
    cfg = dict(cfg)
    if cfg.pop("oracle", False):
        script = {}
        for e in entries:
            inst = e.instance
            for lid in inst.document.layer_ids:
                decision = lid in inst.gold_relevant
                prompt = inst.gold_layer_instructions.get(lid, "edit this layer")
                script[f"{inst.id}/{lid}"] = format_reasoner("gold plan", decision, prompt if decision else None)
        cfg["script"] = {**cfg.get("script", {}), "reason": script}
    return JudgeBackend(**cfg).build()


def build_editor(cfg: dict | None, base_dir: Path | None = None):
    cfg = dict(cfg or {"kind": "identity_mock"})
    kind = cfg.pop("kind")
    if kind == "identity_mock":
        return IdentityEditor()
    if kind == "scripted_mock":
        base = base_dir or Path(".")
        rasters = {k: read_rgba(base / v) for k, v in cfg.get("rasters", {}).items()}
        fill = {k: tuple(v) for k, v in cfg.get("fill", {}).items()}
        return ScriptedEditor(rasters, fill)
    if kind == "remote_http":
        cfg = JudgeBackend(kind="remote_http", **cfg)
        client = cfg.build()
        assert isinstance(client, HttpChatBackend)
        return HttpEditor(client)
    raise ValueError(f"unknown editor kind {kind!r}")


@dataclass
class Backends:
    judge: Any
    aesthetics: Any

    @classmethod
    def from_config(cls, config: RunConfig) -> "Backends":
        judge = build_judge(config.backends.get("judge"))
        return cls(judge, build_judge(config.backends.get("aesthetics"), judge))

    def identity(self) -> dict:
        return {"judge": self.judge.identity(), "aesthetics": self.aesthetics.identity()}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _edited_masks(entry: ManifestEntry, edited, outputs_dir, config: RunConfig):
    if config.mask_source == "external":
        path = entry.edited_masks
        if path is None and outputs_dir is not None and (Path(outputs_dir) / entry.instance.id / "masks").is_dir():
            path = Path(outputs_dir) / entry.instance.id / "masks"
        if path is None:
            raise LayerdocError("external mask source selected but no mask set found")
        return read_mask_set(path)
    if edited.layered is None:
        raise LayerdocError(
            "alpha mask source needs layered edited output (<outputs>/<id>/manifest.json); "
            "use --mask-source external for flat images"
        )
    return document_masks(edited.layered, config.mask_threshold)


def composite_scores(if_pct, lc_pct, tr_pct, aes, weights: MildeWeights) -> dict | None:
    if None in (if_pct, lc_pct, tr_pct, aes):
        return None
    raw = RawScores(if_pct, lc_pct, tr_pct, aes)
    return {name: 100.0 * fn(raw, weights) for name, fn in AGGREGATORS.items()}


def evaluate_instance(
    entry: ManifestEntry,
    edited,
    backends: Backends,
    config: RunConfig,
    outputs_dir=None,
    predicted: set[str] | None = None,
) -> dict:
    inst = entry.instance
    detail: list = []
    lc_report = layout_consistency_masks(
        document_masks(inst.document, config.mask_threshold),
        _edited_masks(entry, edited, outputs_dir, config),
        inst.document.width,
        inst.document.height,
        config.layout,
    )
    lc = 100.0 * (lc_report.normalized_score if config.normalize_layout else lc_report.score)
    if_pct = instruction_following(inst, edited.raster, backends.judge, config.prompts, detail=detail)
    if entry.text_regions is not None:
        regions = read_regions(entry.text_regions)
    else:
        regions = default_text_regions(inst, config.mask_threshold)
    tr = text_rendering(inst, edited.raster, regions, backends.judge, config.prompts, detail=detail)
    aes = aesthetics(edited.raster, backends.aesthetics, config.prompts, context=inst.id)
    if aes.clamped:
        detail.append({"metric": "aesthetics", "clamped_from": aes.raw_response.strip().splitlines()[0]})
    lda = None
    if predicted is not None:
        lda = layer_decision_accuracy(inst.gold_relevant, predicted, inst.document.layer_ids)
    metrics = MetricReport(if_pct, tr, aes.value, lc, lda, detail)
    return {
        "id": inst.id,
        "status": "ok",
        "metrics": metrics.to_dict(),
        "layout": lc_report.to_dict(),
        "scores": composite_scores(if_pct, lc, tr, aes.value, config.weights),
    }


def _failed(instance_id: str, exc: Exception) -> dict:
    return {"id": instance_id, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def summarize(rows: list[dict], config: RunConfig) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    keys = ("instruction_following", "layout_consistency", "aesthetics", "text_rendering", "layer_decision_accuracy")
    means = {k: corpus_mean(r["metrics"][k] for r in ok) for k in keys}
    return {
        "n_instances": len(rows),
        "n_ok": len(ok),
        "n_failed": len(rows) - len(ok),
        "means": means,
        "scores": composite_scores(
            means["instruction_following"],
            means["layout_consistency"],
            means["text_rendering"],
            means["aesthetics"],
            config.weights,
        ),
    }


def _map_instances(fn, entries, workers):
    """Apply ``fn`` to each entry; returns (rows, timings) in entry order."""

    def timed(entry):
        start = time.perf_counter()
        try:
            row = fn(entry)
        except (LayerdocError, InstanceFailure, LookupError, ValueError, OSError) as exc:
            logger.warning("instance %s failed: %s", entry.instance.id, exc)
            row = _failed(entry.instance.id, exc)
        return row, time.perf_counter() - start

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(timed, entries))
    else:
        results = [timed(e) for e in entries]
    rows = [r for r, _ in results]
    timings = {e.instance.id: t for e, (_, t) in zip(entries, results)}
    return rows, timings


def _report(command: str, rows, config: RunConfig, backend_identity: dict) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "command": command,
        "config": {**config.echo(), "backends": backend_identity},
        "instances": rows,
        "corpus": summarize(rows, config),
    }


def run_evaluate(manifests_dir, outputs_dir, config: RunConfig, backends: Backends | None = None) -> tuple[dict, dict]:
    entries = load_corpus(manifests_dir)
    if not entries:
        raise ManifestError(f"no manifests found under {manifests_dir}")
    backends = backends or Backends.from_config(config)

    def one(entry):
        edited = load_edited_output(outputs_dir, entry.instance.id)
        if edited is None:
            raise LayerdocError(f"no edited output for {entry.instance.id}")
        return evaluate_instance(entry, edited, backends, config, outputs_dir)

    rows, timings = _map_instances(one, entries, config.workers)
    return _report("evaluate", rows, config, backends.identity()), timings


def run_agent_corpus(
    manifests_dir, outputs_dir, config: RunConfig, backends: Backends | None = None, reasoner=None, editor=None,
    config_dir: Path | None = None,
) -> tuple[dict, dict]:
    entries = load_corpus(manifests_dir)
    if not entries:
        raise ManifestError(f"no manifests found under {manifests_dir}")
    backends = backends or Backends.from_config(config)
    reasoner = reasoner or build_reasoner(config.backends.get("reasoner", {}), entries)
    editor = editor or build_editor(config.backends.get("editor"), config_dir)

    def one(entry):
        inst = entry.instance
        result = run_agent(inst, reasoner, editor, config.prompts, config.mask_threshold)
        rendered = composite(result.document)
        save_edited_output(outputs_dir, inst, result.document, rendered)
        edited = load_edited_output(outputs_dir, inst.id)
        row = evaluate_instance(entry, edited, backends, config, outputs_dir, predicted=result.selected)
        row["decisions"] = [
            {"layer": o.layer_id, "decision": o.decision, "prompt": o.prompt, "error": o.error}
            for o in result.outputs
        ]
        return row

    rows, timings = _map_instances(one, entries, config.workers)
    identity = {**backends.identity(), "reasoner": reasoner.identity(), "editor": editor.identity()}
    return _report("agent", rows, config, identity), timings


def run_datagen(manifests_dir, out_dir, config: RunConfig, judge=None) -> dict:
    """Consolidate each raw document, match its steps to layers and write gold manifests."""
    entries = load_corpus(manifests_dir)
    if not entries:
        raise ManifestError(f"no manifests found under {manifests_dir}")
    judge = judge or build_judge(config.backends.get("judge"))
    classifier = build_judge(config.backends.get("classifier"), judge)
    sidecar = {}
    for entry in entries:
        inst = entry.instance
        steps = entry.steps
        if steps is None and (entry.root / "steps.txt").is_file():
            steps = read_steps(entry.root / "steps.txt")
        steps = steps or []
        doc = consolidate(inst.document, classifier, config.overlap, config.prompts)
        trace: list = []
        matched = match_steps(
            classify_steps(steps, judge, config.prompts, inst.id), doc, judge, config.prompts, inst.id, trace
        )
        instructions = layer_instructions(matched)
        out = BenchmarkInstance(doc, inst.instruction, frozenset(instructions), instructions, None, inst.id)
        save_manifest(out, Path(out_dir) / inst.id)
        sidecar[inst.id] = {
            "layers_in": len(inst.document.layers),
            "layers_out": len(doc.layers),
            "assignments": [
                {"step": s.text, "category": s.category, "layer": s.assigned_layer} for s in matched
            ],
            "unmatched": [s.text for s in matched if s.assigned_layer is None],
            "trace": [list(t) for t in trace],
        }
    return {"report_version": REPORT_VERSION, "command": "datagen", "instances": sidecar}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
