"""Command-line front end.

    layerdoc evaluate --manifests DIR --outputs DIR [--config FILE] [--report FILE]
    layerdoc agent    --manifests DIR --outputs DIR [--config FILE] [--report FILE]
    layerdoc score    RAW.csv [--weights FILE] [--ratings COLUMN]
    layerdoc datagen  --manifests DIR --out DIR [--config FILE]
    layerdoc reward   TRANSCRIPTS.jsonl
    layerdoc report   REPORT.json
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .exceptions import LayerdocError
from .pipeline import RunConfig, dumps, run_agent_corpus, run_datagen, run_evaluate
from .reward import group_advantages, reward_from_text
from .scoring import AGGREGATORS, MildeWeights, RawScores, spearman

COLUMN_ALIASES = {
    "if": "IF", "instruction_following": "IF",
    "lc": "LC", "layout_consistency": "LC",
    "a": "A", "aes": "A", "aesthetics": "A",
    "tr": "TR", "text_rendering": "TR",
}


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"cannot read {path}: {exc}")


def _config(args) -> RunConfig:
    file_config = _load_json(args.config)
    if args.weights:
        file_config["weights"] = _load_json(args.weights)
    overrides = {
        "workers": args.workers,
        "mask_source": args.mask_source,
        "normalize_layout": True if args.normalize_layout else None,
    }
    return RunConfig.from_sources(file_config, overrides)


def _write_report(report: dict, timings: dict, path) -> None:
    text = dumps(report)
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    if timings is not None:
        stats = {
            "per_instance_seconds": timings,
            "total_seconds": sum(timings.values()),
        }
        path.with_name("timings.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")


def cmd_evaluate(args) -> int:
    config = _config(args)
    report, timings = run_evaluate(args.manifests, args.outputs, config)
    _write_report(report, timings, args.report)
    return 0


def cmd_agent(args) -> int:
    config = _config(args)
    config_dir = Path(args.config).parent if args.config else None
    report, timings = run_agent_corpus(args.manifests, args.outputs, config, config_dir=config_dir)
    _write_report(report, timings, args.report or Path(args.outputs) / "report.json")
    return 0


def read_raw_scores(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise LayerdocError(f"{path}: no rows")
    return rows


def score_rows(rows: list[dict], weights: MildeWeights, ratings: str | None = None):
    """Composite scores (x100) for each CSV row, plus Spearman rho per aggregator."""
    out = []
    for row in rows:
        vals = {}
        for key, value in row.items():
            canon = COLUMN_ALIASES.get(key.strip().lower())
            if canon:
                vals[canon] = float(value)
        missing = {"IF", "LC", "A", "TR"} - set(vals)
        if missing:
            raise LayerdocError(f"raw-score row lacks columns {sorted(missing)}")
        raw = RawScores(vals["IF"], vals["LC"], vals["TR"], vals["A"])
        scored = dict(row)
        for name, fn in AGGREGATORS.items():
            scored[name] = 100.0 * fn(raw, weights)
        out.append(scored)
    rho = None
    if ratings:
        reference = [float(r[ratings]) for r in rows]
        rho = {name: spearman([r[name] for r in out], reference) for name in AGGREGATORS}
    return out, rho


def cmd_score(args) -> int:
    weights = MildeWeights(**_load_json(args.weights)) if args.weights else MildeWeights()
    rows, rho = score_rows(read_raw_scores(args.raw), weights, args.ratings)
    fieldnames = list(rows[0].keys())
    writer = csv.DictWriter(sys.stdout, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: f"{v:.4f}" if k in AGGREGATORS else v for k, v in row.items()})
    if rho is not None:
        sys.stdout.write("\n")
        for name, value in rho.items():
            sys.stdout.write(f"# spearman {name} {value:.4f}\n")
    return 0


def cmd_datagen(args) -> int:
    config = _config(args)
    sidecar = run_datagen(args.manifests, args.out, config)
    Path(args.out, "datagen_report.json").write_text(dumps(sidecar), encoding="utf-8")
    unmatched = sum(len(v["unmatched"]) for v in sidecar["instances"].values())
    print(f"wrote {len(sidecar['instances'])} manifests to {args.out} ({unmatched} unmatched steps)")
    return 0


def cmd_reward(args) -> int:
    """Score reasoner transcripts (JSONL with layer_id, text, gold_decision, gold_prompt, group)."""
    records = [json.loads(l) for l in Path(args.transcripts).read_text(encoding="utf-8").splitlines() if l.strip()]
    groups: dict = {}
    results = []
    for rec in records:
        rb = reward_from_text(rec["text"], rec.get("layer_id", ""), bool(rec["gold_decision"]), rec.get("gold_prompt"))
        results.append({"layer_id": rec.get("layer_id"), "group": rec.get("group"), "r_f": rb.r_f, "r_d": rb.r_d,
                        "r_p": rb.r_p, "total": rb.total})
        if rec.get("group") is not None:
            groups.setdefault(rec["group"], []).append(len(results) - 1)
    for idxs in groups.values():
        if len(idxs) >= 2:
            for i, adv in zip(idxs, group_advantages([results[i]["total"] for i in idxs])):
                results[i]["advantage"] = adv
    for r in results:
        sys.stdout.write(json.dumps(r, sort_keys=True) + "\n")
    return 0


def render_report(report: dict) -> str:
    cols = ("instruction_following", "layout_consistency", "aesthetics", "text_rendering", "layer_decision_accuracy")
    short = ("IF", "LC", "A", "TR", "LDA")

    def fmt(v):
        return "-" if v is None else f"{v:.2f}"

    lines = ["| id | status | " + " | ".join(short) + " | composite |", "|" + "---|" * (len(short) + 3)]
    for row in report["instances"]:
        if row["status"] != "ok":
            lines.append(f"| {row['id']} | failed | " + " | ".join("-" for _ in short) + f" | {row['error']} |")
            continue
        m = row["metrics"]
        score = row["scores"]["milde"] if row.get("scores") else None
        lines.append(f"| {row['id']} | ok | " + " | ".join(fmt(m[c]) for c in cols) + f" | {fmt(score)} |")
    corpus = report["corpus"]
    means = corpus["means"]
    score = corpus["scores"]["milde"] if corpus.get("scores") else None
    lines.append(f"| **mean** | {corpus['n_ok']}/{corpus['n_instances']} | "
                 + " | ".join(fmt(means[c]) for c in cols) + f" | {fmt(score)} |")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    sys.stdout.write(render_report(_load_json(args.report)))
    return 0


def _add_run_flags(p):
    p.add_argument("--manifests", required=True, help="corpus directory of instance manifests")
    p.add_argument("--config", help="JSON run configuration (backends, weights, thresholds)")
    p.add_argument("--weights", help="JSON file with composite-score weights")
    p.add_argument("--workers", type=int, help="instances processed in parallel")
    p.add_argument("--normalize-layout", action="store_true", help="divide layout consistency by its 0.85 maximum")
    p.add_argument("--mask-source", choices=("alpha", "external"), help="where edited-layer masks come from")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerdoc", description="Layered design-document editing toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score black-box edited outputs")
    _add_run_flags(p)
    p.add_argument("--outputs", required=True, help="directory of edited outputs")
    p.add_argument("--report", help="report path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agent", help="run the reason-then-edit agent and evaluate it")
    _add_run_flags(p)
    p.add_argument("--outputs", required=True, help="where edited documents are written")
    p.add_argument("--report", help="report path (default: <outputs>/report.json)")
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("score", help="recompute composite scores from a raw-score CSV")
    p.add_argument("raw", help="CSV with IF, LC, A, TR columns")
    p.add_argument("--weights", help="JSON file with composite-score weights")
    p.add_argument("--ratings", help="column with reference ratings for Spearman's rho")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("datagen", help="consolidate layers and match steps into gold manifests")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("reward", help="per-layer rewards and group advantages for transcripts")
    p.add_argument("transcripts", help="JSONL transcript file")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("report", help="render a run report as a markdown table")
    p.add_argument("report", help="report JSON")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except LayerdocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
