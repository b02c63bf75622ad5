"""Model input formatting: ``<cls> document <sep> query`` with role layout.

The layout records which positions hold the document, the query, and the
special tokens; the relevance machinery uses it to place bias values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .vocab import CLS_ID, SEP_ID, Vocab

if TYPE_CHECKING:
    from .relevance import AttentionBias


@dataclass(frozen=True)
class InputLayout:
    """Partition of the input sequence into roles.

    Positions: 0 is <cls>, then ``doc_len`` document words, then <sep>,
    then ``query_len`` query words.
    """

    doc_len: int
    query_len: int

    @property
    def n(self) -> int:
        return self.doc_len + self.query_len + 2

    @property
    def cls_pos(self) -> int:
        return 0

    @property
    def doc_range(self) -> range:
        return range(1, 1 + self.doc_len)

    @property
    def sep_pos(self) -> int:
        return 1 + self.doc_len

    @property
    def query_range(self) -> range:
        return range(2 + self.doc_len, self.n)

    @property
    def special_positions(self) -> tuple[int, int]:
        return (self.cls_pos, self.sep_pos)

    def roles(self) -> list[str]:
        """Role name per position (for manifests and tests)."""
        out = ["cls"] + ["doc"] * self.doc_len + ["sep"] + ["query"] * self.query_len
        return out


@dataclass
class FormattedInput:
    """Token ids plus layout; the attention bias is attached later."""

    ids: np.ndarray
    layout: InputLayout
    doc_words: tuple[str, ...]
    query_words: tuple[str, ...]
    bias: "AttentionBias | None" = field(default=None)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.intp)
        if self.ids.shape != (self.layout.n,):
            raise ValueError(f"ids length {self.ids.size} does not match layout n={self.layout.n}")


def format_input(document: Sequence[str], query: Sequence[str], vocab: Vocab,
                 max_src_len: int) -> FormattedInput:
    """Build ``<cls> doc <sep> query`` ids, truncating the document to fit.

    The query is always fully retained; document words are dropped from
    the right until the sequence fits ``max_src_len``. A query that does
    not fit even with an empty document is an error.
    """
    document = [w.lower() for w in document]
    query = [w.lower() for w in query]
    if len(query) > max_src_len - 2:
        raise ValueError(
            f"query of {len(query)} words exceeds max_src_len-2 = {max_src_len - 2}")
    doc_budget = max_src_len - 2 - len(query)
    doc = document[:doc_budget]
    layout = InputLayout(doc_len=len(doc), query_len=len(query))
    ids = [CLS_ID] + vocab.encode_words(doc) + [SEP_ID] + vocab.encode_words(query)
    return FormattedInput(ids=np.asarray(ids, dtype=np.intp), layout=layout,
                          doc_words=tuple(doc), query_words=tuple(query))
