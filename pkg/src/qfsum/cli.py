"""Command-line interface.

Subcommands: ``train`` (two-stage fine-tuning), ``summarize`` (single-
document decoding), ``pipeline`` (multi-document two-step run),
``evaluate`` (ROUGE report with figures), and ``stats`` (corpus length
statistics). Exit codes: 0 success, 2 usage or configuration error,
1 runtime failure. ``QFS_SEED`` overrides the configured seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .data import read_corpus, read_predictions, read_references, write_predictions
from .inputs import format_input
from .metrics import evaluate_corpus
from .model import ModelConfig, beam_search
from .pipeline import run_pipeline
from .qa import bias_for_input, make_scorer
from .report import (corpus_stats, format_rouge_table, format_stats_table,
                     render_rouge_figures, render_stats_figure, write_per_example_tsv,
                     write_rouge_tsv, write_stats_tsv)
from .training import TrainConfig, two_stage_finetune
from .vocab import Vocab, words

METRIC_ALIASES = {
    "r1": "rouge-1", "rouge-1": "rouge-1", "rouge1": "rouge-1",
    "r2": "rouge-2", "rouge-2": "rouge-2", "rouge2": "rouge-2",
    "rl": "rouge-l", "rouge-l": "rouge-l", "rougel": "rouge-l",
    "su4": "rouge-su4", "rouge-su4": "rouge-su4",
}


class ConfigError(ValueError):
    """Usage or configuration problem; maps to exit code 2."""


def _env_seed() -> int | None:
    raw = os.environ.get("QFS_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"QFS_SEED must be an integer, got {raw!r}") from exc


def _load_json_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return cfg


def _config_hash(obj: dict) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_json_config(args.config)
    seed = _env_seed()
    if seed is None:
        seed = int(cfg.get("seed", 0))

    model_section = dict(cfg.get("model", {}))
    model_section.setdefault("vocab_size", 7)  # replaced by the built vocabulary
    model_section["seed"] = seed
    try:
        mcfg = ModelConfig(**model_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field 'model': {exc}") from exc

    train_section = dict(cfg.get("train", {}))
    train_section["seed"] = seed
    for key in ("stage1_corpus", "stage2_corpus", "scorer", "scores_path", "vocab_max_size"):
        if key in cfg:
            train_section[key] = cfg[key]
    try:
        tcfg = TrainConfig(**train_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field 'train': {exc}") from exc

    for label, path in (("stage1_corpus", tcfg.stage1_corpus),
                        ("stage2_corpus", tcfg.stage2_corpus)):
        if not path:
            raise ConfigError(f"config field '{label}': a corpus path is required")
        if not Path(path).exists():
            raise ConfigError(f"config field '{label}': file not found: {path}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = two_stage_finetune(tcfg, mcfg, out_dir=out_dir)

    effective = {"seed": seed, "model": asdict(result.config), "train": asdict(tcfg)}
    _write_json(out_dir / "effective_config.json", effective)
    manifest = {
        "seed": seed,
        "config_sha256": _config_hash(effective),
        "stage1_checkpoint": str(result.stage1_path),
        "stage2_checkpoint": str(result.stage2_path),
        "vocab": str(result.vocab_path),
        "vocab_size": len(result.vocab),
        "steps_stage1": tcfg.steps_stage1,
        "steps_stage2": tcfg.steps_stage2,
        "final_loss_stage1": result.stage1_losses[-1] if result.stage1_losses else None,
        "final_loss_stage2": result.stage2_losses[-1] if result.stage2_losses else None,
    }
    _write_json(out_dir / "run_manifest.json", manifest)
    print(f"wrote {result.stage1_path}")
    print(f"wrote {result.stage2_path}")
    print(f"wrote {out_dir / 'run_manifest.json'}")
    return 0


# ---------------------------------------------------------------------------
# summarize / pipeline
# ---------------------------------------------------------------------------

def _load_model(checkpoint: str, vocab_path: str):
    try:
        params = load_checkpoint(checkpoint)
    except (CheckpointError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        vocab = Vocab.load(vocab_path)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(f"vocabulary {vocab_path}: {exc}") from exc
    if len(vocab) != params.config.vocab_size:
        raise ConfigError(
            f"checkpoint/vocab mismatch: checkpoint expects {params.config.vocab_size} "
            f"tokens, vocabulary has {len(vocab)}")
    return params, vocab


def _build_scorer(args: argparse.Namespace):
    try:
        return make_scorer(args.scorer, args.scores)
    except (ValueError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_summarize(args: argparse.Namespace) -> int:
    params, vocab = _load_model(args.checkpoint, args.vocab)
    scorer = None if args.no_bias else _build_scorer(args)
    records = read_corpus(args.input)
    preds: list[tuple[str, str]] = []
    for rec in records:
        doc_words = words(" ".join(rec.documents))
        query_words = words(rec.query)
        fin = format_input(doc_words, query_words, vocab, params.config.max_src_len)
        if scorer is not None and query_words and fin.layout.doc_len > 0:
            fin.bias = bias_for_input(fin, scorer, params.config.max_tgt_len,
                                      example_id=rec.id)
        ids = beam_search(fin, params, beam_size=args.beam, max_len=args.max_len)
        preds.append((rec.id, vocab.decode_text(ids)))
    write_predictions(args.output, preds)
    _write_json(Path(str(args.output) + ".config.json"), {
        "checkpoint": args.checkpoint, "vocab": args.vocab, "beam": args.beam,
        "max_len": args.max_len, "bias": not args.no_bias, "scorer": args.scorer,
    })
    print(f"wrote {args.output} ({len(preds)} records)")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    params, vocab = _load_model(args.checkpoint, args.vocab)
    scorer = _build_scorer(args)
    records = read_corpus(args.input)
    preds: list[tuple[str, str]] = []
    manifest_lines = ["record_id\tconfidence\tdoc_id\tsent_index\ttext"]
    for rec in records:
        result = run_pipeline(rec.documents, rec.query, scorer, params, vocab,
                              budget=args.budget, beam_size=args.beam,
                              max_len=args.max_len, use_bias=not args.no_bias,
                              example_id=rec.id)
        preds.append((rec.id, result.summary))
        for r in result.ranked:
            text = " ".join(r.text.split())
            manifest_lines.append(f"{rec.id}\t{r.confidence:.6f}\t{r.doc_id}\t{r.sent_index}\t{text}")
    write_predictions(args.output, preds)
    manifest_path = Path(args.manifest) if args.manifest else Path(str(args.output) + ".manifest.tsv")
    manifest_path.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    _write_json(Path(str(args.output) + ".config.json"), {
        "checkpoint": args.checkpoint, "vocab": args.vocab, "budget": args.budget,
        "beam": args.beam, "max_len": args.max_len, "bias": not args.no_bias,
        "scorer": args.scorer,
    })
    print(f"wrote {args.output} ({len(preds)} records)")
    print(f"wrote {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / stats
# ---------------------------------------------------------------------------

def _parse_metrics(raw: str) -> list[str]:
    out = []
    for name in raw.split(","):
        name = name.strip().lower()
        if not name:
            continue
        if name not in METRIC_ALIASES:
            raise ConfigError(f"unknown metric name {name!r}; "
                              f"choose from r1, r2, rl, su4")
        variant = METRIC_ALIASES[name]
        if variant not in out:
            out.append(variant)
    if not out:
        raise ConfigError("no metrics selected")
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    variants = _parse_metrics(args.metrics)
    try:
        predictions = read_predictions(args.predictions)
        references = read_references(args.references)
        report = evaluate_corpus(predictions, references, variants)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(format_rouge_table(report))
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [write_rouge_tsv(report, out / "rouge.tsv"),
                 write_per_example_tsv(report, out / "rouge_per_example.tsv")]
        paths.extend(render_rouge_figures(report, out))
        _write_json(out / "evaluate_config.json", {
            "predictions": args.predictions, "references": args.references,
            "metrics": variants,
        })
        for p in paths:
            print(f"wrote {p}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        records = read_corpus(args.corpus)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    stats = corpus_stats(records)
    print(format_stats_table(stats))
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [write_stats_tsv(stats, out / "length_stats.tsv"),
                 render_stats_figure(stats, out)]
        for p in paths:
            print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfsum",
        description="Query-focused summarization with answer-relevance-biased attention")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="two-stage fine-tuning from a config file")
    p.add_argument("-c", "--config", required=True, help="JSON config file")
    p.add_argument("-o", "--out", default="qfsum_run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="decode summaries for corpus records")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True, help="corpus records (JSONL)")
    p.add_argument("-o", "--output", required=True, help="predictions file (JSONL)")
    p.add_argument("--scorer", default="lexical-overlap",
                   help="lexical-overlap or precomputed-file")
    p.add_argument("--scores", default=None, help="score file for the precomputed scorer")
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-len", type=int, default=48)
    p.add_argument("--no-bias", action="store_true", help="decode with the bias zeroed")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("pipeline", help="two-step multi-document summarization")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True, help="multi-document records (JSONL)")
    p.add_argument("-o", "--output", required=True, help="predictions file (JSONL)")
    p.add_argument("--budget", type=int, default=250, help="word budget for retrieval")
    p.add_argument("--scorer", default="lexical-overlap")
    p.add_argument("--scores", default=None)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-len", type=int, default=48)
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--manifest", default=None, help="ranked-sentence manifest path")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="ROUGE report for predictions vs references")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metrics", default="r1,r2,rl,su4")
    p.add_argument("--report-dir", default=None,
                   help="directory for TSVs and rendered figures")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="average word lengths of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
