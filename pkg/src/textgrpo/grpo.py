"""GRPO with the DAPO token-level loss, KL regularization and mixed-policy groups.

For one prompt, a group of ``G`` completions is scored by a text-similarity
reward.  Rewards are standardized within the group to give advantages,
and the loss is

    L = -(1/N) * sum_i sum_t [ min(s A_i, clip(s, 1-eps, 1+eps) A_i) - beta * KL_t ]

where ``N`` is the total number of completion tokens in the group,
``s = pi(token) / pi_old(token)`` and ``KL_t`` is the per-token estimator
``r - log r - 1`` with ``r = pi_ref(token) / pi(token)``.

In mixed-policy mode one group member is the ground-truth reference.  Its
behaviour probability is taken to be 1 (old log-probs of 0), so its ratio is
``pi(token)`` itself, and it is never clipped.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evaluation import evaluate, strip_eos
from .metrics import Metric, reward
from .policy.base import Policy, Trace, clone_frozen, sample_batch
from .policy.neural import GRUPolicy
from .policy.optim import AdamW
from .tasks import DatasetSplit, Example
from .training import DivergenceError, TrainLog, epoch_batches, grad_norm_clip, steps_per_epoch, warmup_lr

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    group_size: int = 8
    beta: float = 0.02
    clip_eps: float = 0.2
    lr: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 1
    batch_size: int = 8
    warmup_frac: float = 0.0
    train_temperature: float = 1.0
    eval_temperature: float = 0.9
    eval_top_p: float = 0.9
    max_prompt_len: int = 256
    max_completion_len: int = 200
    mixed_policy: bool = False
    reward: str = "BLEU"
    seed: int = 0
    std_floor: float = 1e-8
    kl_ceiling: float = float("inf")
    max_grad_norm: float | None = None
    max_steps: int | None = None
    eval_every: int = 0
    eval_limit: int | None = None
    hidden: int = 64

    def validate(self) -> "TrainConfig":
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2: advantages are undefined for a single sample")
        if self.beta < 0 or self.clip_eps <= 0 or self.lr <= 0:
            raise ValueError("beta must be >= 0, clip_eps and lr > 0")
        if self.train_temperature <= 0 or self.eval_temperature <= 0 or not 0 < self.eval_top_p <= 1:
            raise ValueError("invalid sampling temperature / top-p")
        if self.max_completion_len < 1 or self.max_prompt_len < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("length caps, batch size must be positive and epochs >= 0")
        if not 0 <= self.warmup_frac <= 1:
            raise ValueError("warmup_frac must lie in [0, 1]")
        Metric.parse(self.reward)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


# -- per-token pieces ------------------------------------------------------------

def compute_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    """Group-standardized rewards, ``(r - mean) / std`` with the population std.

    A group whose std is at or below ``std_floor`` gets all-zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two rewards per group")
    std = r.std()
    if not std > std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def token_objective(ratio, advantage, eps: float = 0.2, clipping_enabled: bool = True):
    """``min(s A, clip(s, 1-eps, 1+eps) A)``, or plain ``s A`` when clipping is off."""
    ratio = np.asarray(ratio, dtype=float)
    unclipped = ratio * advantage
    if not clipping_enabled:
        return unclipped
    return np.minimum(unclipped, np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


def kl_token(logp: "float | np.ndarray", logp_ref: "float | np.ndarray"):
    """Per-token KL estimate ``r - log r - 1`` with ``r = exp(logp_ref - logp)`` (always >= 0)."""
    log_r = np.asarray(logp_ref, dtype=float) - np.asarray(logp, dtype=float)
    return np.expm1(log_r) - log_r


# -- groups ----------------------------------------------------------------------

@dataclass
class Member:
    tokens: list[int]
    old_logprobs: np.ndarray
    off_policy: bool = False


@dataclass
class CompletionGroup:
    prompt: list[int]
    members: list[Member]
    truncated_reference: bool = False

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a group needs at least two members")
        if sum(m.off_policy for m in self.members) > 1:
            raise ValueError("at most one off-policy member per group")
        for m in self.members:
            if len(m.tokens) == 0:
                raise ValueError("group members must be nonempty")
            if len(m.old_logprobs) != len(m.tokens):
                raise ValueError("old_logprobs must align with tokens")
            if m.off_policy and np.any(np.asarray(m.old_logprobs) != 0.0):
                raise ValueError("the off-policy member's old log-probs must be exactly 0")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def num_tokens(self) -> int:
        return sum(len(m.tokens) for m in self.members)


def reference_member(reference: Sequence[int], eos_id: int, max_len: int) -> tuple[Member, bool]:
    toks = list(reference) + [eos_id]
    truncated = len(toks) > max_len
    toks = toks[:max_len]
    return Member(toks, np.zeros(len(toks)), off_policy=True), truncated


def build_groups(prompts: Sequence[Sequence[int]], references: Sequence[Sequence[int]], policy: Policy,
                 config: TrainConfig, rng: np.random.Generator) -> list[CompletionGroup]:
    """Sample groups for a batch of prompts from the (frozen) behaviour policy."""
    for p in prompts:
        if len(p) > config.max_prompt_len:
            raise ValueError(f"prompt of {len(p)} tokens exceeds max_prompt_len={config.max_prompt_len}")
    n_samples = config.group_size - 1 if config.mixed_policy else config.group_size
    samples = sample_batch(policy, prompts, n_samples, config.train_temperature, 1.0,
                           config.max_completion_len, rng)
    groups = []
    for prompt, ref, drawn in zip(prompts, references, samples):
        members = [Member(t, lp) for t, lp in drawn]
        truncated = False
        if config.mixed_policy:
            m, truncated = reference_member(ref, policy.vocab.eos_id, config.max_completion_len)
            if truncated:
                logger.info("reference truncated to %d tokens", config.max_completion_len)
            members.append(m)
        groups.append(CompletionGroup(list(prompt), members, truncated))
    return groups


def build_group(prompt: Sequence[int], reference: Sequence[int], policy: Policy, config: TrainConfig,
                rng: "np.random.Generator | int | None" = None) -> CompletionGroup:
    return build_groups([prompt], [reference], policy, config, np.random.default_rng(rng))[0]


def group_rewards(group: CompletionGroup, reference: Sequence[int], metric, eos_id: int) -> np.ndarray:
    return np.array([reward(metric, strip_eos(m.tokens, eos_id), reference) for m in group.members])


# -- loss ------------------------------------------------------------------------

@dataclass
class LossStats:
    loss: float
    mean_kl: float
    clip_fraction: float
    n_tokens: int
    per_group_loss: list[float] = field(default_factory=list)


def _flatten(groups: Sequence[CompletionGroup]):
    prompts, comps, owners = [], [], []
    for gi, g in enumerate(groups):
        for m in g.members:
            prompts.append(g.prompt)
            comps.append(m.tokens)
            owners.append(gi)
    return prompts, comps, owners


def dapo_loss_batch(groups: Sequence[CompletionGroup], advantages: Sequence[np.ndarray], policy: Policy,
                    ref_policy: "Policy | None", config: TrainConfig,
                    trace: "Trace | None" = None) -> tuple[float, np.ndarray, LossStats]:
    """Mean over groups of the per-group DAPO loss, its gradient, and diagnostics.

    The gradient flows only through the selected branch of the clipped
    minimum: where the clipped constant wins, the token contributes no
    policy-gradient term.  The KL term always contributes when ``beta > 0``.
    """
    if len(groups) != len(advantages):
        raise ValueError("one advantage vector per group required")
    prompts, comps, owners = _flatten(groups)
    if trace is None:
        trace = policy.forward(prompts, comps)
    ref_lps = ref_policy.forward(prompts, comps).logprobs if ref_policy is not None else None
    eps, beta = config.clip_eps, config.beta
    n_groups = len(groups)
    weights = []
    group_loss = np.zeros(n_groups)
    kl_sum, kl_count, clipped, onpol_tokens = 0.0, 0, 0, 0
    k = 0
    for gi, (g, adv) in enumerate(zip(groups, advantages)):
        adv = np.asarray(adv, dtype=float)
        if adv.shape != (g.size,):
            raise ValueError("advantage vector length must equal the group size")
        N = g.num_tokens
        total = 0.0
        for mi, m in enumerate(g.members):
            lp = trace.logprobs[k]
            A = adv[mi]
            s = np.exp(lp - np.asarray(m.old_logprobs, dtype=float))
            if m.off_policy:
                obj = s * A
                dobj = s * A
            else:
                obj = token_objective(s, A, eps, True)
                lower, upper = 1.0 - eps, 1.0 + eps
                if A >= 0:
                    active = s <= upper
                else:
                    active = s >= lower
                dobj = np.where(active, s * A, 0.0)
                if A != 0:
                    clipped += int(np.count_nonzero(~active))
                onpol_tokens += len(lp)
            term = obj
            dterm = dobj
            if ref_lps is not None:
                kl = kl_token(lp, ref_lps[k])
                kl_sum += float(kl.sum())
                kl_count += len(lp)
                if beta > 0:
                    term = term - beta * kl
                    # d kl / d logp = 1 - r
                    dterm = dterm + beta * np.expm1(ref_lps[k] - lp)
            total += float(term.sum())
            weights.append(-dterm / (N * n_groups))
            k += 1
        group_loss[gi] = -total / N
    loss = float(group_loss.mean())
    if not np.isfinite(loss):
        bad = [i for i, v in enumerate(group_loss) if not np.isfinite(v)]
        raise DivergenceError(f"non-finite DAPO loss in groups {bad} "
                              f"(sizes {[groups[i].size for i in bad]}, tokens {[groups[i].num_tokens for i in bad]})")
    grad = policy.backward(trace, weights)
    stats = LossStats(
        loss=loss,
        mean_kl=kl_sum / kl_count if kl_count else 0.0,
        clip_fraction=clipped / onpol_tokens if onpol_tokens else 0.0,
        n_tokens=sum(g.num_tokens for g in groups),
        per_group_loss=group_loss.tolist(),
    )
    return loss, grad, stats


def dapo_loss(group: CompletionGroup, advantages: np.ndarray, policy: Policy, ref_policy: "Policy | None",
              config: TrainConfig) -> tuple[float, np.ndarray]:
    """DAPO loss of a single group and its gradient w.r.t. ``policy.params``."""
    loss, grad, _ = dapo_loss_batch([group], [advantages], policy, ref_policy, config)
    return loss, grad


# -- training loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    policy: Policy
    best_policy: Policy
    log: TrainLog
    optimizer: AdamW
    validation: list[dict] = field(default_factory=list)
    best_score: float = float("-inf")  # validation score of the reward metric


def _encode_examples(examples: Sequence[Example], vocab) -> tuple[list[list[int]], list[list[int]]]:
    return [vocab.encode(e.prompt) for e in examples], [vocab.encode(e.reference) for e in examples]


def run_validation(policy: Policy, examples: Sequence[Example], config, limit: "int | None" = None) -> dict:
    subset = list(examples)[:limit] if limit else list(examples)
    scores = evaluate(policy, subset, temperature=config.eval_temperature, top_p=config.eval_top_p,
                      max_len=config.max_completion_len, seed=config.seed)
    return {m.value: v for m, v in scores.items()}


def grpo_train(dataset: "DatasetSplit | Sequence[Example]", config: TrainConfig, policy: "Policy | None" = None,
               log_path=None, log_header: "dict | None" = None, validation: "Sequence[Example] | None" = None,
               on_validation: "Callable[[int, dict, Policy], None] | None" = None) -> TrainResult:
    """Train ``policy`` with GRPO (or MP-GRPO when ``config.mixed_policy``).

    Each step snapshots the behaviour policy, samples groups for a batch of
    prompts, scores them, standardizes rewards per group, and takes one AdamW
    step on the batch-mean DAPO loss.  The KL reference is the policy as it
    was when training started.
    """
    config.validate()
    if isinstance(dataset, DatasetSplit):
        train = dataset.train
        vocab = dataset.vocabulary()
        if validation is None:
            validation = dataset.validation
    else:
        train = list(dataset)
        vocab = policy.vocab if policy is not None else None
    if not train:
        raise ValueError("training set is empty")
    if policy is None:
        policy = GRUPolicy(vocab, hidden=config.hidden, seed=config.seed)
    vocab = policy.vocab
    metric = Metric.parse(config.reward)
    rng = np.random.default_rng(config.seed)
    opt = AdamW(policy.num_params, lr=config.lr, weight_decay=config.weight_decay)
    ref_policy = clone_frozen(policy)
    log = TrainLog(log_path, log_header)
    prompts, refs = _encode_examples(train, vocab)

    total_steps = steps_per_epoch(len(train), config.batch_size) * config.epochs
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)
    result = TrainResult(policy, clone_frozen(policy), log, opt)

    def validate(step: int) -> None:
        if not validation:
            return
        scores = run_validation(policy, validation, config, config.eval_limit)
        scores["step"] = step
        result.validation.append(scores)
        # the best snapshot is chosen on the metric being optimized
        if scores[metric.value] > result.best_score:
            result.best_score = scores[metric.value]
            result.best_policy = clone_frozen(policy)
        if on_validation:
            on_validation(step, scores, policy)

    validate(0)
    step = 0
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        if step >= total_steps:
            break
        for idx in epoch_batches(len(train), config.batch_size, rng):
            if step >= total_steps:
                break
            behaviour = clone_frozen(policy)
            groups = build_groups([prompts[i] for i in idx], [refs[i] for i in idx], behaviour, config, rng)
            rewards = [group_rewards(g, refs[i], metric, vocab.eos_id) for g, i in zip(groups, idx)]
            advantages = [compute_advantages(r, config.std_floor) for r in rewards]
            loss, grad, stats = dapo_loss_batch(groups, advantages, policy, ref_policy, config)
            grad = grad_norm_clip(grad, config.max_grad_norm)
            lr = warmup_lr(config.lr, step, total_steps, config.warmup_frac)
            opt.step(policy.params, grad, lr)
            step += 1
            all_r = np.concatenate(rewards)
            on_r = np.concatenate([[r for r, m in zip(rw, g.members) if not m.off_policy]
                                   for rw, g in zip(rewards, groups)])
            record = {
                "step": step,
                "epoch": epoch,
                "mean_reward": float(all_r.mean()),
                "mean_onpolicy_reward": float(on_r.mean()),
                "loss": loss,
                "mean_kl": stats.mean_kl,
                "clip_fraction": stats.clip_fraction,
                "lr": lr,
                "off_policy_per_group": sorted({sum(m.off_policy for m in g.members) for g in groups}),
                "degenerate_groups": int(sum(not np.any(a) for a in advantages)),
                "mean_len": float(np.mean([len(m.tokens) for g in groups for m in g.members if not m.off_policy])),
                "wall_time": round(time.perf_counter() - t0, 3),
            }
            log.append(record)
            if stats.mean_kl > config.kl_ceiling:
                raise DivergenceError(
                    f"mean KL {stats.mean_kl:.4f} exceeded ceiling {config.kl_ceiling} at step {step}", log.records)
            if config.eval_every and step % config.eval_every == 0:
                validate(step)
        if not config.eval_every:
            validate(step)
    if config.eval_every and (not result.validation or result.validation[-1]["step"] != step):
        validate(step)
    if not validation:
        result.best_policy = clone_frozen(policy)
    return result
