"""Answer-relevance scores and the additive cross-attention bias matrix.

A QA-style scorer yields start/end probability distributions over the
words of a context. Per-word relevance is their elementwise sum, the
confidence of a span is start probability at its first word plus end
probability at its last, and the bias matrix repeats one relevance row
for every target position. Query and special positions receive the
document maximum so they are never disadvantaged against document words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inputs import InputLayout

DISTRIBUTION_TOL = 1e-3


def _check_distribution(p: np.ndarray, what: str, tol: float = DISTRIBUTION_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{what} has non-finite entries")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError(f"{what} entries must lie in [0, 1]")
    total = float(p.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{what} sums to {total:.6f}, expected 1 within {tol}")
    return p


@dataclass
class RelevanceProfile:
    """Start/end span distributions and derived per-word relevance."""

    start_probs: np.ndarray
    end_probs: np.ndarray

    def __post_init__(self):
        self.start_probs = _check_distribution(self.start_probs, "start_probs")
        self.end_probs = _check_distribution(self.end_probs, "end_probs")
        if self.start_probs.shape != self.end_probs.shape:
            raise ValueError(
                f"start/end lengths differ: {self.start_probs.size} vs {self.end_probs.size}")

    def __len__(self) -> int:
        return self.start_probs.size

    @property
    def relevance(self) -> np.ndarray:
        return self.start_probs + self.end_probs


@dataclass
class AttentionBias:
    """An (m x n) additive attention bias whose rows are all identical."""

    row: np.ndarray
    m: int

    def __post_init__(self):
        self.row = np.asarray(self.row, dtype=np.float64)
        if self.row.ndim != 1:
            raise ValueError("bias row must be a vector")
        if self.m < 1:
            raise ValueError(f"bias needs m >= 1 rows, got {self.m}")

    @property
    def n(self) -> int:
        return self.row.size

    @property
    def values(self) -> np.ndarray:
        """The full m x n matrix (rows are bit-identical copies)."""
        return np.tile(self.row, (self.m, 1))

    def matrix(self, rows: int | None = None) -> np.ndarray:
        """The bias truncated or repeated to ``rows`` rows."""
        return np.tile(self.row, (self.m if rows is None else rows, 1))


def word_relevance(start_probs: np.ndarray, end_probs: np.ndarray) -> np.ndarray:
    """Per-word relevance: elementwise sum of the two distributions."""
    s = _check_distribution(start_probs, "start_probs")
    e = _check_distribution(end_probs, "end_probs")
    if s.shape != e.shape:
        raise ValueError(f"start/end lengths differ: {s.size} vs {e.size}")
    return s + e


def confidence_score(profile: RelevanceProfile, span: tuple[int, int]) -> float:
    """Span confidence: start probability at i plus end probability at j."""
    i, j = span
    n = len(profile)
    if not (0 <= i <= j < n):
        raise ValueError(f"invalid span ({i}, {j}) for context of {n} words")
    return float(profile.start_probs[i] + profile.end_probs[j])


def build_bias_matrix(doc_relevance: np.ndarray, layout: InputLayout, m: int) -> AttentionBias:
    """One bias row over the full input, repeated for ``m`` target rows.

    Document positions carry their relevance scores; the query and the
    <cls>/<sep> positions all carry the document maximum.
    """
    r = np.asarray(doc_relevance, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("document relevance is empty")
    if r.size != layout.doc_len:
        raise ValueError(
            f"relevance length {r.size} does not match document length {layout.doc_len}")
    if m < 1:
        raise ValueError(f"target length m must be >= 1, got {m}")
    row = np.empty(layout.n, dtype=np.float64)
    peak = float(r.max())
    row[layout.cls_pos] = peak
    row[list(layout.doc_range)] = r
    row[layout.sep_pos] = peak
    for pos in layout.query_range:
        row[pos] = peak
    return AttentionBias(row=row, m=m)
