"""Report rendering: text tables, tab-delimited files, and figures.

Every CLI report path emits a human-readable table on stdout and, when a
report directory is given, machine-readable TSVs plus matplotlib PNG
figures rendered alongside them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .data import CorpusRecord  # noqa: E402
from .metrics import RougeReport  # noqa: E402


def format_rouge_table(report: RougeReport) -> str:
    lines = [f"{'metric':<12}{'precision':>12}{'recall':>12}{'f1':>12}"]
    for v in report.variants:
        s = report.mean[v]
        lines.append(f"{v:<12}{s.precision:>12.4f}{s.recall:>12.4f}{s.f1:>12.4f}")
    lines.append(f"examples: {len(report.per_example)}")
    return "\n".join(lines)


def write_rouge_tsv(report: RougeReport, path: str | Path) -> Path:
    path = Path(path)
    lines = ["metric\tprecision\trecall\tf1"]
    for v in report.variants:
        s = report.mean[v]
        lines.append(f"{v}\t{s.precision:.6f}\t{s.recall:.6f}\t{s.f1:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_per_example_tsv(report: RougeReport, path: str | Path) -> Path:
    path = Path(path)
    lines = ["id\tmetric\tprecision\trecall\tf1"]
    for rid in sorted(report.per_example):
        for v in report.variants:
            s = report.per_example[rid][v]
            lines.append(f"{rid}\t{v}\t{s.precision:.6f}\t{s.recall:.6f}\t{s.f1:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def render_rouge_figures(report: RougeReport, out_dir: str | Path) -> list[Path]:
    """Corpus-mean bars and a per-example F1 histogram per variant."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []

    variants = report.variants
    x = range(len(variants))
    width = 0.27
    fig, ax = plt.subplots(figsize=(6.4, 3.6), dpi=150)
    ax.bar([i - width for i in x], [report.mean[v].precision for v in variants],
           width, label="precision")
    ax.bar(list(x), [report.mean[v].recall for v in variants], width, label="recall")
    ax.bar([i + width for i in x], [report.mean[v].f1 for v in variants],
           width, label="f1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(variants)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("corpus mean")
    ax.legend(fontsize=8)
    fig.tight_layout()
    mean_path = out_dir / "rouge_mean.png"
    fig.savefig(mean_path)
    plt.close(fig)
    paths.append(mean_path)

    fig, axes = plt.subplots(1, len(variants), figsize=(3.0 * len(variants), 2.8),
                             dpi=150, sharey=True)
    if len(variants) == 1:
        axes = [axes]
    for ax, v in zip(axes, variants):
        f1s = [s[v].f1 for s in report.per_example.values()]
        ax.hist(f1s, bins=20, range=(0.0, 1.0), color="steelblue")
        ax.set_title(v, fontsize=9)
        ax.set_xlabel("f1")
    axes[0].set_ylabel("examples")
    fig.tight_layout()
    hist_path = out_dir / "rouge_f1_hist.png"
    fig.savefig(hist_path)
    plt.close(fig)
    paths.append(hist_path)
    return paths


# ---------------------------------------------------------------------------
# corpus length statistics
# ---------------------------------------------------------------------------

@dataclass
class StatsRow:
    id: str
    document_words: int
    query_words: int
    summary_words: int


@dataclass
class CorpusStats:
    rows: list[StatsRow]

    @property
    def mean_document_words(self) -> float:
        return self._mean("document_words")

    @property
    def mean_query_words(self) -> float:
        return self._mean("query_words")

    @property
    def mean_summary_words(self) -> float:
        return self._mean("summary_words")

    def _mean(self, field: str) -> float:
        if not self.rows:
            return 0.0
        return sum(getattr(r, field) for r in self.rows) / len(self.rows)


def corpus_stats(records: Sequence[CorpusRecord]) -> CorpusStats:
    """Average word lengths; a record's documents are summed together."""
    rows = [StatsRow(id=r.id,
                     document_words=sum(len(d.split()) for d in r.documents),
                     query_words=len(r.query.split()),
                     summary_words=len(r.summary.split()))
            for r in records]
    return CorpusStats(rows=rows)


def format_stats_table(stats: CorpusStats) -> str:
    lines = [f"{'field':<12}{'mean words':>12}",
             f"{'documents':<12}{stats.mean_document_words:>12.2f}",
             f"{'query':<12}{stats.mean_query_words:>12.2f}",
             f"{'summary':<12}{stats.mean_summary_words:>12.2f}",
             f"records: {len(stats.rows)}"]
    return "\n".join(lines)


def write_stats_tsv(stats: CorpusStats, path: str | Path) -> Path:
    path = Path(path)
    lines = ["id\tdocument_words\tquery_words\tsummary_words"]
    for r in stats.rows:
        lines.append(f"{r.id}\t{r.document_words}\t{r.query_words}\t{r.summary_words}")
    lines.append(f"__mean__\t{stats.mean_document_words:.2f}"
                 f"\t{stats.mean_query_words:.2f}\t{stats.mean_summary_words:.2f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def render_stats_figure(stats: CorpusStats, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 2.8), dpi=150)
    for ax, (label, values) in zip(axes, [
            ("documents", [r.document_words for r in stats.rows]),
            ("query", [r.query_words for r in stats.rows]),
            ("summary", [r.summary_words for r in stats.rows])]):
        ax.hist(values, bins=20, color="darkseagreen")
        ax.set_title(f"{label} words", fontsize=9)
    axes[0].set_ylabel("records")
    fig.tight_layout()
    path = out_dir / "length_stats.png"
    fig.savefig(path)
    plt.close(fig)
    return path
