"""Fully materialized order-k policy: one logit row per k-token context.

Small enough to enumerate, which makes it the substrate for exact
brute-force oracles.  The context of a completion token is the last ``k``
tokens of ``prompt + [BOS] + prefix``, left-padded with BOS.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..vocab import Vocabulary
from .base import Policy, Trace, log_softmax


class TabularPolicy(Policy):
    kind = "tabular"

    def __init__(self, vocab: Vocabulary, order: int = 1, params: np.ndarray | None = None, seed: int | None = 0,
                 init_scale: float = 0.08):
        if order not in (0, 1, 2):
            raise ValueError("context order must be 0, 1 or 2")
        self.vocab = vocab
        self.order = order
        V = len(vocab)
        shape = (V**order, V)
        if params is None:
            rng = np.random.default_rng(seed)
            params = rng.uniform(-init_scale, init_scale, size=shape[0] * shape[1])
        if params.size != shape[0] * shape[1]:
            raise ValueError("parameter vector has wrong size")
        self.params = params
        self.table = params.reshape(shape)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "order": self.order}

    @classmethod
    def from_descriptor(cls, vocab, descriptor, params):
        return cls(vocab, order=descriptor["order"], params=params)

    def context_index(self, context: Sequence[int]) -> int:
        V = len(self.vocab)
        idx = 0
        for tok in context:
            idx = idx * V + tok
        return idx

    def _ctx(self, history: Sequence[int]) -> int:
        if self.order == 0:
            return 0
        tail = list(history[-self.order:])
        tail = [self.vocab.bos_id] * (self.order - len(tail)) + tail
        return self.context_index(tail)

    def start(self, prompts):
        self._check_tokens(prompts)
        hist = [list(p) + [self.vocab.bos_id] for p in prompts]
        state = [h[-self.order:] if self.order else [] for h in hist]
        return state, self.table[[self._ctx(h) for h in hist]].copy()

    def advance(self, state, tokens):
        new = []
        for h, t in zip(state, tokens):
            h = (list(h) + [int(t)])[-self.order:] if self.order else []
            new.append(h)
        return new, self.table[[self._ctx(h) for h in new]].copy()

    def forward(self, prompts, completions):
        self._check_tokens(prompts)
        self._check_tokens(completions)
        logprobs, cache = [], []
        for p, c in zip(prompts, completions):
            full = list(p) + [self.vocab.bos_id] + list(c)
            base = len(p) + 1
            ctx = np.array([self._ctx(full[: base + t]) for t in range(len(c))], dtype=np.int64)
            lsm = log_softmax(self.table[ctx]) if len(c) else np.zeros((0, len(self.vocab)))
            tok = np.asarray(c, dtype=np.int64)
            logprobs.append(lsm[np.arange(len(c)), tok])
            cache.append((ctx, tok, lsm))
        return Trace(logprobs, cache)

    def backward(self, trace, weights):
        grad = np.zeros_like(self.table)
        for (ctx, tok, lsm), w in zip(trace.cache, weights):
            w = np.asarray(w, dtype=float)
            if w.shape != tok.shape:
                raise ValueError("weights do not match completion length")
            d = -np.exp(lsm) * w[:, None]
            d[np.arange(len(tok)), tok] += w
            np.add.at(grad, ctx, d)
        return grad.ravel()
