"""One GRPO update, written out step by step.

Run:  python3 demos/grpo_step.py
"""

import numpy as np

from textgrpo.grpo import TrainConfig, build_group, compute_advantages, dapo_loss, group_rewards
from textgrpo.policy import AdamW, GRUPolicy, clone_frozen
from textgrpo.tasks import gen_cipher

split = gen_cipher(0, size=50, vocab_size=30)
vocab = split.vocabulary()
example = split.train[0]
prompt, reference = vocab.encode(example.prompt), vocab.encode(example.reference)
print("prompt:   ", example.prompt)
print("reference:", example.reference)

policy = GRUPolicy(vocab, hidden=32, seed=0)
ref_policy = clone_frozen(policy)          # KL anchor, frozen for the whole run
config = TrainConfig(max_completion_len=10, mixed_policy=True)

# G-1 samples from the behaviour policy plus the reference as an off-policy member
behaviour = clone_frozen(policy)
group = build_group(prompt, reference, behaviour, config, rng=0)
rewards = group_rewards(group, reference, "BLEU", vocab.eos_id)
advantages = compute_advantages(rewards)
for m, r, a in zip(group.members, rewards, advantages):
    tag = "ref" if m.off_policy else "   "
    print(f" {tag} {vocab.decode(m.tokens)[:40]:42s} reward {r:.3f}  advantage {a:+.3f}")

loss, grad = dapo_loss(group, advantages, policy, ref_policy, config)
print(f"DAPO loss {loss:.4f}, |grad| {np.linalg.norm(grad):.4f}, tokens in group {group.num_tokens}")

opt = AdamW(policy.num_params, lr=1e-2)
opt.step(policy.params, grad)
after, _ = dapo_loss(group, advantages, policy, ref_policy, config)
print(f"loss on the same group after one step: {after:.4f}")
