"""Reference summarizers: LEAD, TextRank, and QA-ranked extraction.

All three respect a word budget (default 250) modulo the rule that at
least one sentence is always returned when any exist.
"""

from __future__ import annotations

import logging
import math
import re
from importlib import resources
from typing import Sequence

import numpy as np

from .pipeline import (DEFAULT_BUDGET, assemble_input, rank_answer_sentences,
                       segment_documents, split_sentences)
from .qa import Scorer
from .vocab import words

logger = logging.getLogger(__name__)

TEXTRANK_DAMPING = 0.85
TEXTRANK_TOL = 1e-6
TEXTRANK_MAX_ITER = 200

_WORD_RE = re.compile(r"[a-z0-9]+")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("qfsum").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


def _tokens(sentence: str) -> list[str]:
    return _WORD_RE.findall(sentence.lower())


def _content_words(sentence: str) -> set[str]:
    return {t for t in _tokens(sentence) if t not in STOPWORDS}


def lead(docs: Sequence[str], dates: Sequence[str | None] | None = None,
         budget: int = DEFAULT_BUDGET) -> str:
    """Leading sentences of the most recent document, up to the budget.

    Without usable dates the last document in input order is used (and a
    warning logged). Ties on the date go to the later input position.
    """
    if not docs:
        raise ValueError("lead needs at least one document")
    pick = len(docs) - 1
    parsed = []
    if dates is not None:
        from datetime import date
        for d in dates:
            try:
                parsed.append(date.fromisoformat(d) if d else None)
            except (ValueError, TypeError):
                parsed.append(None)
    if parsed and any(p is not None for p in parsed):
        best = None
        for idx, p in enumerate(parsed[: len(docs)]):
            if p is not None and (best is None or p >= best):
                best, pick = p, idx
    else:
        logger.warning("lead: no usable dates; falling back to the last document")

    sentences = split_sentences(docs[pick])
    out: list[str] = []
    used = 0
    for sent in sentences:
        n = len(sent.split())
        if out and used + n > budget:
            break
        out.append(sent)
        used += n
    return " ".join(out)


def _similarity(ci: set[str], cj: set[str], ni: int, nj: int) -> float:
    """Shared content words over the log sentence lengths."""
    if ni < 2 or nj < 2:
        return 0.0
    overlap = len(ci & cj)
    if overlap == 0:
        return 0.0
    return overlap / (math.log(ni) + math.log(nj))


def textrank_scores(sentences: Sequence[str]) -> np.ndarray:
    """Damped power iteration over the sentence-similarity graph.

    Outgoing edge weights are normalized to sum 1; sentences with no
    edges distribute uniformly. Scores are nonnegative and sum to the
    sentence count.
    """
    n = len(sentences)
    if n == 0:
        return np.zeros(0)
    toks = [_tokens(s) for s in sentences]
    content = [_content_words(s) for s in sentences]
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w = _similarity(content[i], content[j], len(toks[i]), len(toks[j]))
            sim[i, j] = sim[j, i] = w
    row_sums = sim.sum(axis=1)
    transition = np.full((n, n), 1.0 / n)
    nz = row_sums > 0
    transition[nz] = sim[nz] / row_sums[nz, None]

    scores = np.ones(n)
    for _ in range(TEXTRANK_MAX_ITER):
        new = (1.0 - TEXTRANK_DAMPING) + TEXTRANK_DAMPING * (transition.T @ scores)
        if np.abs(new - scores).max() < TEXTRANK_TOL:
            return new
        scores = new
    return scores


def textrank(docs: Sequence[str], budget: int = DEFAULT_BUDGET) -> str:
    """Top TextRank sentences within budget, emitted in source order."""
    sentences: list[str] = []
    for doc in docs:
        sentences.extend(split_sentences(doc))
    if not sentences:
        raise ValueError("textrank needs at least one sentence")
    scores = textrank_scores(sentences)
    order = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    chosen: list[int] = []
    used = 0
    for i in order:
        n = len(sentences[i].split())
        if chosen and used + n > budget:
            break
        chosen.append(i)
        used += n
    return " ".join(sentences[i] for i in sorted(chosen))


def extractive_qa_baseline(docs: Sequence[str], query: str, scorer: Scorer,
                           budget: int = DEFAULT_BUDGET,
                           example_id: str | None = None) -> str:
    """Truncated QA-ranked sentences: the pipeline's first step as a summary."""
    ranked = rank_answer_sentences(segment_documents(docs), words(query), scorer,
                                   example_id=example_id)
    if not ranked:
        return ""
    return assemble_input(ranked, budget)
