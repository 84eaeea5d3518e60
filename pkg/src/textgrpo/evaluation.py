"""Sampling-based evaluation of a policy on a list of examples."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .metrics import ALL_METRICS, Metric, reward
from .policy.base import Policy, sample_batch
from .tasks import Example


def strip_eos(tokens: Sequence[int], eos_id: int) -> list[int]:
    tokens = list(tokens)
    return tokens[:-1] if tokens and tokens[-1] == eos_id else tokens


def generate(policy: Policy, examples: Sequence[Example], temperature: float = 0.9, top_p: float = 0.9,
             max_len: int = 200, seed: int = 0, chunk: int = 512) -> list[list[int]]:
    """One completion per example (EOS stripped), sampled in batches."""
    vocab = policy.vocab
    rng = np.random.default_rng(seed)
    prompts = [vocab.encode(e.prompt) for e in examples]
    out: list[list[int]] = []
    for i in range(0, len(prompts), chunk):
        groups = sample_batch(policy, prompts[i : i + chunk], 1, temperature, top_p, max_len, rng)
        out += [strip_eos(g[0][0], vocab.eos_id) for g in groups]
    return out


def evaluate(policy: Policy, examples: Sequence[Example], metrics: Sequence[Metric] = ALL_METRICS,
             temperature: float = 0.9, top_p: float = 0.9, max_len: int = 200, seed: int = 0) -> dict[Metric, float]:
    """Mean score of each metric over ``examples`` (in [0, 1])."""
    if not examples:
        return {m: 0.0 for m in metrics}
    vocab = policy.vocab
    hyps = generate(policy, examples, temperature, top_p, max_len, seed)
    totals = {m: 0.0 for m in metrics}
    for hyp, ex in zip(hyps, examples):
        ref = vocab.encode(ex.reference)
        for m in metrics:
            totals[m] += reward(m, hyp, ref)
    return {m: totals[m] / len(examples) for m in metrics}
