"""Autoregressive policy contract and the operations built on it.

A policy scores completion tokens conditioned on ``prompt + [BOS] + prefix``.
Parameters live in a single flat float64 vector ``params`` so optimizers,
finite-difference checks and checkpoints treat every policy alike.
"""

from __future__ import annotations

import copy
from typing import Any, Sequence

import numpy as np

from ..vocab import Vocabulary


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Trace:
    """Forward-pass record: per-sequence log-probs plus whatever backward needs."""

    def __init__(self, logprobs: list[np.ndarray], cache: Any = None):
        self.logprobs = logprobs
        self.cache = cache


class Policy:
    """Base class.  Subclasses implement ``start``/``advance``/``forward``/``backward``."""

    vocab: Vocabulary
    params: np.ndarray
    kind = "abstract"

    # -- decoding interface -------------------------------------------------
    def start(self, prompts: Sequence[Sequence[int]]) -> tuple[Any, np.ndarray]:
        """Consume ``prompt + [BOS]`` per row; return (state, next-token logits)."""
        raise NotImplementedError

    def advance(self, state: Any, tokens: np.ndarray) -> tuple[Any, np.ndarray]:
        raise NotImplementedError

    # -- scoring interface --------------------------------------------------
    def forward(self, prompts: Sequence[Sequence[int]], completions: Sequence[Sequence[int]]) -> Trace:
        raise NotImplementedError

    def backward(self, trace: Trace, weights: Sequence[np.ndarray]) -> np.ndarray:
        """Gradient of sum_b sum_t weights[b][t] * logprobs[b][t] w.r.t. ``params``."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        """Architecture description sufficient to rebuild the policy around ``params``."""
        raise NotImplementedError

    @classmethod
    def from_descriptor(cls, vocab: Vocabulary, descriptor: dict, params: np.ndarray) -> "Policy":
        raise NotImplementedError

    # -- shared helpers -----------------------------------------------------
    @property
    def num_params(self) -> int:
        return int(self.params.size)

    def set_params(self, values: np.ndarray) -> None:
        self.params[...] = values

    def clone(self) -> "Policy":
        return type(self).from_descriptor(self.vocab, copy.deepcopy(self.descriptor()), self.params.copy())

    def next_token_logprobs(self, prompt: Sequence[int], prefix: Sequence[int] = ()) -> np.ndarray:
        state, logits = self.start([prompt])
        for tok in prefix:
            state, logits = self.advance(state, np.array([tok]))
        return log_softmax(logits[0])

    def _check_tokens(self, seqs: Sequence[Sequence[int]]) -> None:
        V = len(self.vocab)
        for s in seqs:
            for t in s:
                if not 0 <= t < V:
                    raise ValueError(f"token id {t} outside vocabulary of size {V}")


def clone_frozen(policy: Policy) -> Policy:
    """Deep snapshot whose parameters are read-only."""
    snap = policy.clone()
    snap.params.flags.writeable = False
    return snap


def logprob(policy: Policy, prompt: Sequence[int], completion: Sequence[int]) -> np.ndarray:
    """Per-token log pi(completion[t] | prompt, completion[:t])."""
    if len(completion) == 0:
        raise ValueError("completion must be nonempty")
    return policy.forward([prompt], [completion]).logprobs[0]


def grad_weighted_logprob(
    policy: Policy, prompt: Sequence[int], completion: Sequence[int], weights: Sequence[float]
) -> np.ndarray:
    """Gradient of sum_t weights[t] * log pi(completion[t] | ...) w.r.t. the parameters."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(completion),):
        raise ValueError(f"weights shape {weights.shape} does not match completion length {len(completion)}")
    trace = policy.forward([prompt], [completion])
    return policy.backward(trace, [weights])


def _top_p_filter(logp: np.ndarray, top_p: float) -> np.ndarray:
    """Mask (to -inf) tokens outside the smallest nucleus with mass >= top_p, row-wise."""
    if top_p >= 1.0:
        return logp
    order = np.argsort(-logp, axis=-1, kind="stable")
    sorted_p = np.exp(np.take_along_axis(logp, order, axis=-1))
    before = np.cumsum(sorted_p, axis=-1) - sorted_p
    keep_sorted = before < top_p
    keep = np.zeros_like(keep_sorted)
    np.put_along_axis(keep, order, keep_sorted, axis=-1)
    return np.where(keep, logp, -np.inf)


def sample_batch(
    policy: Policy,
    prompts: Sequence[Sequence[int]],
    count: int,
    temperature: float = 1.0,
    top_p: float = 1.0,
    max_len: int = 32,
    rng: "np.random.Generator | int | None" = None,
) -> list[list[tuple[list[int], np.ndarray]]]:
    """Sample ``count`` completions for each prompt.

    Returns, per prompt, a list of ``(tokens, logprobs)``.  The log-probs are
    those of the policy itself (temperature 1, no nucleus truncation), i.e.
    exactly what :func:`logprob` reports for the same tokens.  A completion
    ends with EOS or after ``max_len`` tokens.
    """
    if count < 1 or temperature <= 0 or not 0 < top_p <= 1 or max_len < 1:
        raise ValueError("invalid sampling arguments")
    rng = np.random.default_rng(rng)
    rows = [p for p in prompts for _ in range(count)]
    n = len(rows)
    eos = policy.vocab.eos_id
    state, logits = policy.start(rows)
    tokens = np.zeros((n, max_len), dtype=np.int64)
    logps = np.zeros((n, max_len))
    lengths = np.full(n, max_len)
    alive = np.ones(n, dtype=bool)
    for t in range(max_len):
        base = log_softmax(logits)
        dist = base if temperature == 1.0 else log_softmax(logits / temperature)
        dist = _top_p_filter(dist, top_p)
        probs = np.exp(dist - dist.max(axis=-1, keepdims=True))
        cdf = np.cumsum(probs, axis=-1)
        u = rng.random(n) * cdf[:, -1]
        tok = np.minimum((cdf < u[:, None]).sum(axis=-1), probs.shape[1] - 1)
        tok = np.where(alive, tok, eos)
        tokens[:, t] = tok
        logps[:, t] = base[np.arange(n), tok]
        finished = alive & (tok == eos)
        lengths[finished] = t + 1
        alive &= ~finished
        if not alive.any() or t == max_len - 1:
            break
        state, logits = policy.advance(state, tok)
    out = []
    for i in range(len(prompts)):
        group = []
        for j in range(i * count, (i + 1) * count):
            L = int(lengths[j])
            group.append((tokens[j, :L].tolist(), logps[j, :L].copy()))
        out.append(group)
    return out


def sample(
    policy: Policy,
    prompt: Sequence[int],
    count: int,
    temperature: float = 1.0,
    top_p: float = 1.0,
    max_len: int = 32,
    rng: "np.random.Generator | int | None" = None,
) -> list[tuple[list[int], np.ndarray]]:
    return sample_batch(policy, [prompt], count, temperature, top_p, max_len, rng)[0]
