"""Word-level vocabulary with reserved special tokens.

Tokens are lowercased whitespace-separated words. Ids 0..5 are reserved
for the specials; everything else is assigned by descending corpus
frequency (ties broken alphabetically) so builds are deterministic.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
CLS_TOKEN = "<cls>"
SEP_TOKEN = "<sep>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, BOS_TOKEN, EOS_TOKEN)

PAD_ID, UNK_ID, CLS_ID, SEP_ID, BOS_ID, EOS_ID = range(6)


def words(text: str) -> list[str]:
    """Whitespace word split, lowercased."""
    return text.lower().split()


class Vocab:
    """Immutable token <-> id mapping."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the reserved special tokens")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def encode_words(self, ws: Iterable[str]) -> list[int]:
        idx = self.index
        return [idx.get(w.lower(), UNK_ID) for w in ws]

    def encode(self, text: str) -> list[int]:
        return self.encode_words(words(text))

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def decode_text(self, ids: Iterable[int]) -> str:
        """Content words only; specials are dropped."""
        return " ".join(t for t in self.decode(ids) if t not in SPECIAL_TOKENS)

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int | None = None,
              min_count: int = 1) -> "Vocab":
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(words(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [tok for tok, n in ranked
                if n >= min_count and tok not in SPECIAL_TOKENS]
        if max_size is not None:
            kept = kept[: max(0, max_size - len(SPECIAL_TOKENS))]
        return cls(list(SPECIAL_TOKENS) + kept)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)
