"""Two-step multi-document summarization.

Step one retrieves answer-related sentences: documents are split into
sentences, packed greedily into paragraphs of at most 300 words, each
paragraph is scored by the span scorer, the sentences containing the
best span are kept with that span's confidence, and everything is sorted
by confidence. Step two concatenates the ranked sentences into a word
budget and feeds the result to the biased summarization model.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .inputs import format_input
from .model import ModelParams, beam_search
from .qa import DEFAULT_MAX_SPAN_LEN, Scorer, bias_for_input, extract_answer_span
from .relevance import confidence_score
from .vocab import Vocab, words

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 250
MAX_PARAGRAPH_WORDS = 300

# Common abbreviations that end with '.' but do not end a sentence.
ABBREVIATIONS = frozenset({
    "mr.", "mrs.", "ms.", "dr.", "prof.", "rev.", "gen.", "sen.", "rep.",
    "st.", "sr.", "jr.", "u.s.", "u.k.", "u.n.", "e.g.", "i.e.", "etc.",
    "vs.", "cf.", "fig.", "no.", "vol.", "al.", "inc.", "ltd.", "co.", "corp.",
})

_BOUNDARY = re.compile(r'([.!?]+["\')\]]?)\s+(?=["\'(\[]?[A-Z0-9])')


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split on terminal punctuation.

    A boundary is {. ! ?} (optionally followed by a closing quote or
    bracket) plus whitespace plus an uppercase letter, digit, or opening
    quote. Known abbreviations never end a sentence. Concatenating the
    result reproduces the input words in order.
    """
    text = " ".join(text.split())
    if not text:
        return []
    pieces: list[str] = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        candidate = text[start:match.end(1)]
        last_word = candidate.split()[-1].lower() if candidate.split() else ""
        if last_word in ABBREVIATIONS:
            continue
        pieces.append(candidate.strip())
        start = match.end()
    rest = text[start:].strip()
    if rest:
        pieces.append(rest)
    return pieces


@dataclass
class ParagraphSegment:
    """A run of consecutive sentences from one document, <= 300 words
    unless a single sentence is itself longer."""

    doc_id: int
    sent_start: int
    sent_stop: int
    word_count: int
    sentences: list[str]

    @property
    def text(self) -> str:
        return " ".join(self.sentences)

    @property
    def oversized(self) -> bool:
        return self.word_count > MAX_PARAGRAPH_WORDS


def segment_documents(docs: Sequence[str],
                      max_words: int = MAX_PARAGRAPH_WORDS) -> list[ParagraphSegment]:
    """Greedy sentence packing: fill each paragraph up to ``max_words``.

    A sentence longer than the cap becomes its own (oversized) segment.
    Every sentence lands in exactly one segment, in order.
    """
    if max_words < 1:
        raise ValueError(f"max_words must be >= 1, got {max_words}")
    segments: list[ParagraphSegment] = []
    for doc_id, doc in enumerate(docs):
        sentences = split_sentences(doc)
        current: list[str] = []
        current_words = 0
        current_start = 0
        for idx, sent in enumerate(sentences):
            n = len(sent.split())
            if current and current_words + n > max_words:
                segments.append(ParagraphSegment(doc_id, current_start, idx,
                                                 current_words, current))
                current, current_words, current_start = [], 0, idx
            current.append(sent)
            current_words += n
        if current:
            segments.append(ParagraphSegment(doc_id, current_start,
                                             current_start + len(current),
                                             current_words, current))
    return segments


@dataclass
class RankedSentence:
    text: str
    confidence: float
    doc_id: int
    sent_index: int
    paragraph_id: int


def rank_answer_sentences(segments: Sequence[ParagraphSegment], query: Sequence[str],
                          scorer: Scorer, max_span_len: int = DEFAULT_MAX_SPAN_LEN,
                          example_id: str | None = None) -> list[RankedSentence]:
    """Best-span sentences from every segment, sorted by confidence.

    Each segment contributes the sentences that overlap its best answer
    span, tagged with the span's confidence. A scorer failure skips the
    segment with a warning. Sorting is confidence-descending with
    deterministic (doc id, sentence index) tie-breaks.
    """
    ranked: list[RankedSentence] = []
    for para_id, seg in enumerate(segments):
        seg_words: list[str] = []
        offsets: list[tuple[int, int]] = []
        for sent in seg.sentences:
            ws = sent.split()
            offsets.append((len(seg_words), len(seg_words) + len(ws)))
            seg_words.extend(ws)
        if not seg_words:
            continue
        sid = f"{example_id}:{para_id}" if example_id is not None else None
        try:
            profile = scorer.score_context(seg_words, list(query), example_id=sid)
        except Exception as exc:  # noqa: BLE001 - scorer is a plug-in boundary
            logger.warning("scorer failed on segment %d (doc %d): %s",
                           para_id, seg.doc_id, exc)
            continue
        i, j, _ = extract_answer_span(profile, max_span_len)
        conf = confidence_score(profile, (i, j))
        for k, (lo, hi) in enumerate(offsets):
            if lo <= j and i < hi:  # sentence word range intersects the span
                ranked.append(RankedSentence(text=seg.sentences[k], confidence=conf,
                                             doc_id=seg.doc_id,
                                             sent_index=seg.sent_start + k,
                                             paragraph_id=para_id))
    ranked.sort(key=lambda r: (-r.confidence, r.doc_id, r.sent_index))
    return ranked


def assemble_input(ranked: Sequence[RankedSentence], budget_words: int) -> str:
    """Concatenate ranked sentences into the word budget.

    Duplicates (exact lowercased text) are skipped; assembly stops at the
    first sentence that would overflow the budget, except that the first
    kept sentence is always included.
    """
    if budget_words < 1:
        raise ValueError(f"budget_words must be >= 1, got {budget_words}")
    chosen: list[str] = []
    seen: set[str] = set()
    used = 0
    for r in ranked:
        key = " ".join(r.text.lower().split())
        if key in seen:
            continue
        n = len(r.text.split())
        if chosen and used + n > budget_words:
            break
        chosen.append(r.text)
        seen.add(key)
        used += n
    return " ".join(chosen)


@dataclass
class PipelineResult:
    summary: str
    ranked: list[RankedSentence]
    assembled: str


def run_pipeline(docs: Sequence[str], query: str, scorer: Scorer, params: ModelParams,
                 vocab: Vocab, budget: int = DEFAULT_BUDGET, beam_size: int = 4,
                 max_len: int = 48, use_bias: bool = True,
                 example_id: str | None = None) -> PipelineResult:
    """Retrieve answer-related sentences, then decode a biased summary."""
    segments = segment_documents(docs)
    ranked = rank_answer_sentences(segments, words(query), scorer,
                                   example_id=example_id)
    assembled = assemble_input(ranked, budget) if ranked else ""
    if not assembled:
        logger.warning("no ranked sentences; falling back to the raw documents")
    doc_words = assembled.split() if assembled else words(" ".join(docs))
    fin = format_input(doc_words, words(query), vocab, params.config.max_src_len)
    if use_bias and fin.query_words and fin.layout.doc_len > 0:
        fin.bias = bias_for_input(fin, scorer, params.config.max_tgt_len,
                                  example_id=f"{example_id}:input" if example_id else None)
    ids = beam_search(fin, params, beam_size=beam_size, max_len=max_len)
    return PipelineResult(summary=vocab.decode_text(ids), ranked=ranked,
                          assembled=assembled)


def summarize_multidoc(docs: Sequence[str], query: str, scorer: Scorer,
                       params: ModelParams, vocab: Vocab,
                       budget: int = DEFAULT_BUDGET, beam_size: int = 4,
                       max_len: int = 48) -> str:
    return run_pipeline(docs, query, scorer, params, vocab, budget=budget,
                        beam_size=beam_size, max_len=max_len).summary
