"""Span scorers: start/end distributions for (context, query) word pairs.

Two scorer kinds sit behind one interface: a deterministic lexical
overlap heuristic, and a table of precomputed distributions loaded from
file (so real QA-model outputs can be injected offline). Both return
``RelevanceProfile`` objects and are stateless after construction.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .inputs import FormattedInput
from .relevance import AttentionBias, RelevanceProfile, build_bias_matrix, word_relevance

SCORER_KINDS = ("lexical-overlap", "precomputed-file")

DEFAULT_MAX_SPAN_LEN = 30


class Scorer(Protocol):
    def score_context(self, context: Sequence[str], query: Sequence[str],
                      example_id: str | None = None) -> RelevanceProfile: ...


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class LexicalOverlapScorer:
    """Heuristic scorer from lowercased word overlap with the query.

    Each context word's logit counts how many positions in its 3-wide
    window (itself and both neighbours) hold a query word, with an extra
    +2 when the word itself is a query word. Start probabilities are the
    softmax of these logits; end probabilities add a +1 bonus at the last
    position of every run of query-matching words, shifting end mass to
    where a matched stretch stops. Zero overlap anywhere backs off to
    uniform distributions.
    """

    exact_bonus = 2.0
    end_bonus = 1.0

    def score_context(self, context: Sequence[str], query: Sequence[str],
                      example_id: str | None = None) -> RelevanceProfile:
        if len(context) == 0:
            raise ValueError("cannot score an empty context")
        n = len(context)
        ctx = [w.lower() for w in context]
        qset = {w.lower() for w in query}
        match = np.array([w in qset for w in ctx], dtype=bool)
        if not match.any():
            uniform = np.full(n, 1.0 / n)
            return RelevanceProfile(start_probs=uniform, end_probs=uniform.copy())

        window_hits = np.zeros(n, dtype=np.float64)
        for i in range(n):
            lo, hi = max(0, i - 1), min(n, i + 2)
            window_hits[i] = match[lo:hi].sum()
        logits = window_hits + self.exact_bonus * match

        run_end = match & ~np.concatenate([match[1:], [False]])
        end_logits = logits + self.end_bonus * run_end
        return RelevanceProfile(start_probs=_softmax(logits),
                                end_probs=_softmax(end_logits))


class PrecomputedScorer:
    """Serves stored distributions keyed by example id."""

    def __init__(self, table: dict[str, RelevanceProfile],
                 tokens: dict[str, list[str]] | None = None):
        self.table = dict(table)
        self.tokens = dict(tokens or {})

    def score_context(self, context: Sequence[str], query: Sequence[str],
                      example_id: str | None = None) -> RelevanceProfile:
        if len(context) == 0:
            raise ValueError("cannot score an empty context")
        if example_id is None:
            raise ValueError("precomputed scorer needs an example id")
        if example_id not in self.table:
            raise KeyError(f"no precomputed scores for example id {example_id!r}")
        profile = self.table[example_id]
        if len(profile) != len(context):
            raise ValueError(
                f"stored scores for {example_id!r} cover {len(profile)} words, "
                f"context has {len(context)}")
        stored = self.tokens.get(example_id)
        if stored is not None:
            got = [w.lower() for w in context]
            if [t.lower() for t in stored] != got:
                raise ValueError(f"stored tokens for {example_id!r} do not match the context")
        return profile

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedScorer":
        table, tokens = load_scores(path, return_tokens=True)
        return cls(table, tokens)


def load_scores(path: str | Path, return_tokens: bool = False):
    """Parse a score file: one JSON record per line with id/start/end/tokens.

    Distributions are validated on load; a sum more than 1e-3 away from 1,
    out-of-range entries, or token misalignment reject the record with its
    line number and id.
    """
    table: dict[str, RelevanceProfile] = {}
    tokens: dict[str, list[str]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(rec, dict) or "id" not in rec:
            raise ValueError(f"{path}:{lineno}: record must be an object with an 'id'")
        rid = str(rec["id"])
        if rid in table:
            raise ValueError(f"{path}:{lineno}: duplicate id {rid!r}")
        try:
            start = np.asarray(rec["start"], dtype=np.float64)
            end = np.asarray(rec["end"], dtype=np.float64)
            toks = list(rec["tokens"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed record for id {rid!r}: {exc}") from exc
        try:
            profile = RelevanceProfile(start_probs=start, end_probs=end)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: invalid distributions for id {rid!r}: {exc}") from exc
        if len(toks) != len(profile):
            raise ValueError(
                f"{path}:{lineno}: id {rid!r} has {len(toks)} tokens but "
                f"{len(profile)} score entries")
        table[rid] = profile
        tokens[rid] = [str(t) for t in toks]
    if return_tokens:
        return table, tokens
    return table


def extract_answer_span(profile: RelevanceProfile,
                        max_span_len: int = DEFAULT_MAX_SPAN_LEN) -> tuple[int, int, float]:
    """Best span (i, j) maximizing start[i] + end[j] with j - i < max_span_len.

    Exact ties go to the smallest start, then the smallest end.
    """
    if max_span_len < 1:
        raise ValueError(f"max_span_len must be >= 1, got {max_span_len}")
    s, e = profile.start_probs, profile.end_probs
    n = len(profile)
    best_score = -np.inf
    best = (0, 0)
    for i in range(n):
        window = e[i:i + max_span_len]
        j_off = int(np.argmax(window))
        score = float(s[i] + window[j_off])
        if score > best_score:
            best_score = score
            best = (i, i + j_off)
    return best[0], best[1], best_score


def make_scorer(kind: str, scores_path: str | Path | None = None) -> Scorer:
    """Build a scorer by kind name ('lexical-overlap' or 'precomputed-file')."""
    if kind in ("lexical", "lexical-overlap"):
        return LexicalOverlapScorer()
    if kind in ("precomputed", "precomputed-file"):
        if scores_path is None:
            raise ValueError("precomputed scorer needs a score file path")
        return PrecomputedScorer.from_file(scores_path)
    raise ValueError(f"unknown scorer kind {kind!r}; expected one of {SCORER_KINDS}")


def bias_for_input(fin: FormattedInput, scorer: Scorer, m: int,
                   example_id: str | None = None) -> AttentionBias:
    """Score the formatted document against its query and build the bias."""
    profile = scorer.score_context(list(fin.doc_words), list(fin.query_words),
                                   example_id=example_id)
    r = word_relevance(profile.start_probs, profile.end_probs)
    return build_bias_matrix(r, fin.layout, m)
