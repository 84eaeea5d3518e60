"""Symbol vocabulary shared by tokenization, policies and checkpoints."""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)


class Vocabulary:
    """Ordered list of distinct symbols; ids 0..3 are PAD, BOS, EOS, UNK."""

    def __init__(self, symbols: Iterable[str]):
        words = [s for s in symbols if s not in RESERVED]
        if len(set(words)) != len(words):
            raise ValueError("vocabulary symbols must be distinct")
        self.symbols: list[str] = list(RESERVED) + words
        self._index = {s: i for i, s in enumerate(self.symbols)}

    pad_id = 0
    bos_id = 1
    eos_id = 2
    unk_id = 3

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.symbols == other.symbols

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def id(self, symbol: str) -> int:
        return self._index.get(symbol, self.unk_id)

    def encode(self, text: str) -> list[int]:
        return [self.id(w) for w in text.split()]

    def decode(self, ids: Sequence[int], strip_eos: bool = True) -> str:
        out = []
        for i in ids:
            if strip_eos and i == self.eos_id:
                break
            out.append(self.symbols[i])
        return " ".join(out)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode()).hexdigest()[:16]

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary from whitespace-delimited texts, symbols sorted."""
        words: set[str] = set()
        for t in texts:
            words.update(t.split())
        return cls(sorted(words - set(RESERVED)))


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Whitespace tokenization through ``vocab``; unknown words become UNK."""
    return vocab.encode(text)
