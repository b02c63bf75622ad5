"""ROUGE-1/2/L/SU4 with clipped counts and multi-reference max-F1.

Scoring tokenization is lowercase alphanumeric-run splitting with no
stemming or stopword removal. Skip-bigrams allow at most four tokens
between the pair, and SU4 pools unigrams with the skip-bigrams.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9]+")

SU4_MAX_GAP = 4
VARIANTS = ("rouge-1", "rouge-2", "rouge-l", "rouge-su4")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def _prf(match: int, cand_total: int, ref_total: int) -> Scores:
    p = match / cand_total if cand_total else 0.0
    r = match / ref_total if ref_total else 0.0
    return Scores(p, r, _f1(p, r))


def _as_tokens(text_or_tokens: str | Sequence[str]) -> list[str]:
    if isinstance(text_or_tokens, str):
        return tokenize(text_or_tokens)
    return [t.lower() for t in text_or_tokens]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped(cand: Counter, ref: Counter) -> int:
    return sum((cand & ref).values())


def _best(per_ref: Iterable[Scores]) -> Scores:
    best = Scores(0.0, 0.0, 0.0)
    for s in per_ref:
        if s.f1 > best.f1:
            best = s
    return best


def rouge_n(candidate: str | Sequence[str], references, n: int) -> Scores:
    """Clipped n-gram overlap; multiple references reduce by max F1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    refs = _reference_list(references)
    cand = _as_tokens(candidate)
    if not cand:
        return Scores(0.0, 0.0, 0.0)
    cand_counts = _ngrams(cand, n)
    out = []
    for ref in refs:
        ref_counts = _ngrams(_as_tokens(ref), n)
        out.append(_prf(_clipped(cand_counts, ref_counts),
                        sum(cand_counts.values()), sum(ref_counts.values())))
    return _best(out)


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    # iterative DP over two rows
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: str | Sequence[str], references) -> Scores:
    """Longest-common-subsequence precision/recall against each reference."""
    refs = _reference_list(references)
    cand = _as_tokens(candidate)
    if not cand:
        return Scores(0.0, 0.0, 0.0)
    out = []
    for ref in refs:
        ref_toks = _as_tokens(ref)
        lcs = _lcs_len(cand, ref_toks) if ref_toks else 0
        out.append(_prf(lcs, len(cand), len(ref_toks)))
    return _best(out)


def _su4_pool(tokens: Sequence[str], max_gap: int = SU4_MAX_GAP) -> Counter:
    """Skip-bigrams with at most ``max_gap`` tokens in between, plus unigrams."""
    pool: Counter = Counter()
    for i, tok in enumerate(tokens):
        pool[(tok,)] += 1
        for j in range(i + 1, min(len(tokens), i + max_gap + 2)):
            pool[(tok, tokens[j])] += 1
    return pool


def rouge_su4(candidate: str | Sequence[str], references) -> Scores:
    refs = _reference_list(references)
    cand = _as_tokens(candidate)
    if not cand:
        return Scores(0.0, 0.0, 0.0)
    cand_pool = _su4_pool(cand)
    out = []
    for ref in refs:
        ref_pool = _su4_pool(_as_tokens(ref))
        out.append(_prf(_clipped(cand_pool, ref_pool),
                        sum(cand_pool.values()), sum(ref_pool.values())))
    return _best(out)


def _reference_list(references) -> list:
    """References: one text, a list of reference texts, or a list of token
    lists. A bare list of strings always means multiple references."""
    if isinstance(references, str):
        return [references]
    refs = list(references)
    if not refs:
        raise ValueError("at least one reference is required")
    return refs


def score_variant(variant: str, candidate, references) -> Scores:
    if variant == "rouge-1":
        return rouge_n(candidate, references, 1)
    if variant == "rouge-2":
        return rouge_n(candidate, references, 2)
    if variant == "rouge-l":
        return rouge_l(candidate, references)
    if variant == "rouge-su4":
        return rouge_su4(candidate, references)
    raise ValueError(f"unknown metric variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class RougeReport:
    variants: list[str]
    per_example: dict[str, dict[str, Scores]]
    mean: dict[str, Scores]


def evaluate_corpus(predictions: dict[str, str], references: dict[str, str],
                    variants: Sequence[str] = VARIANTS) -> RougeReport:
    """Per-example scores plus unweighted corpus means over aligned ids."""
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown metric variant {v!r}; expected one of {VARIANTS}")
    missing_refs = sorted(set(predictions) - set(references))
    missing_preds = sorted(set(references) - set(predictions))
    if missing_refs or missing_preds:
        parts = []
        if missing_refs:
            parts.append(f"ids without references: {', '.join(missing_refs)}")
        if missing_preds:
            parts.append(f"ids without predictions: {', '.join(missing_preds)}")
        raise ValueError("prediction/reference ids do not align; " + "; ".join(parts))

    per_example: dict[str, dict[str, Scores]] = {}
    for rid in sorted(predictions):
        per_example[rid] = {v: score_variant(v, predictions[rid], references[rid])
                            for v in variants}
    mean: dict[str, Scores] = {}
    n = len(per_example)
    for v in variants:
        if n == 0:
            mean[v] = Scores(0.0, 0.0, 0.0)
            continue
        p = sum(s[v].precision for s in per_example.values()) / n
        r = sum(s[v].recall for s in per_example.values()) / n
        f = sum(s[v].f1 for s in per_example.values()) / n
        mean[v] = Scores(p, r, f)
    return RougeReport(variants=list(variants), per_example=per_example, mean=mean)
