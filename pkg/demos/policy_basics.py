"""A small GRU policy: sampling, log-probs, and a gradient check.

Run:  python3 demos/policy_basics.py
"""

import numpy as np

from textgrpo.gradcheck import check_gradient
from textgrpo.policy import GRUPolicy, TabularPolicy, logprob, sample
from textgrpo.vocab import Vocabulary

vocab = Vocabulary(["ba", "be", "bi", "bo", "bu"])
policy = GRUPolicy(vocab, hidden=16, seed=0, init_scale=0.5)
print(f"GRU policy over {len(vocab)} symbols, {policy.num_params} parameters")

prompt = vocab.encode("ba be bi")
for tokens, lps in sample(policy, prompt, count=4, temperature=1.0, max_len=8, rng=0):
    # the log-probs returned by sampling are the policy's own
    assert np.allclose(lps, logprob(policy, prompt, tokens))
    print(f"  {vocab.decode(tokens)!r:30s} log p = {lps.sum():7.3f}")

# Gradient of a weighted sum of token log-probs, checked against central differences.
completion = vocab.encode("bo bu ba") + [vocab.eos_id]
weights = np.array([0.5, -1.0, 2.0, 0.3])
grad = policy.backward(policy.forward([prompt], [completion]), [weights])
f = lambda: float(weights @ logprob(policy, prompt, completion))
print("max relative error vs finite differences:", f"{check_gradient(f, grad, policy.params, 100, rng=0):.1e}")

# The tabular policy keeps one logit row per context, so it can be enumerated exactly.
table = TabularPolicy(vocab, order=1, seed=0, init_scale=1.0)
probs = np.exp(table.next_token_logprobs(prompt))
print("tabular next-token distribution:", np.round(probs, 3), "sum", probs.sum())
