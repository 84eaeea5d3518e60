"""Supervised fine-tuning baseline: teacher-forced token-level NLL of the reference."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grpo import TrainResult, run_validation
from .policy.base import Policy, clone_frozen
from .policy.neural import GRUPolicy
from .policy.optim import AdamW
from .tasks import DatasetSplit, Example
from .training import DivergenceError, TrainLog, epoch_batches, grad_norm_clip, steps_per_epoch, warmup_lr


@dataclass
class SftConfig:
    lr: float = 3e-3
    weight_decay: float = 0.0
    epochs: int = 3
    batch_size: int = 16
    warmup_frac: float = 0.0
    seed: int = 0
    eval_temperature: float = 0.9
    eval_top_p: float = 0.9
    max_completion_len: int = 200
    max_grad_norm: float | None = None
    max_steps: int | None = None
    eval_every: int = 0
    eval_limit: int | None = None
    hidden: int = 64

    def validate(self) -> "SftConfig":
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or not 0 <= self.warmup_frac <= 1:
            raise ValueError("invalid SFT configuration")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SftConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown SftConfig fields: {sorted(unknown)}")
        return cls(**d)


def _targets(references: Sequence[Sequence[int]], eos_id: int) -> list[list[int]]:
    return [list(r) + [eos_id] for r in references]


def sft_loss_batch(policy: Policy, prompts: Sequence[Sequence[int]],
                   references: Sequence[Sequence[int]]) -> tuple[float, np.ndarray]:
    """Token-averaged NLL over the batch (reference tokens plus EOS) and its gradient."""
    targets = _targets(references, policy.vocab.eos_id)
    n_tok = sum(len(t) for t in targets)
    trace = policy.forward(prompts, targets)
    loss = -sum(float(lp.sum()) for lp in trace.logprobs) / n_tok
    grad = policy.backward(trace, [np.full(len(t), -1.0 / n_tok) for t in targets])
    return loss, grad


def sft_loss(policy: Policy, prompt: Sequence[int], reference: Sequence[int]) -> tuple[float, np.ndarray]:
    """Mean over reference tokens of -log pi(token | prompt, prefix), with its gradient."""
    if len(reference) == 0:
        raise ValueError("reference must be nonempty")
    return sft_loss_batch(policy, [prompt], [reference])


def sft_train(dataset: "DatasetSplit | Sequence[Example]", config: SftConfig, policy: "Policy | None" = None,
              log_path=None, log_header: "dict | None" = None, validation: "Sequence[Example] | None" = None,
              on_validation: "Callable[[int, dict, Policy], None] | None" = None) -> TrainResult:
    """Mini-batch NLL descent with AdamW; keeps the best-validation-BLEU snapshot."""
    config.validate()
    if isinstance(dataset, DatasetSplit):
        train = dataset.train
        if validation is None:
            validation = dataset.validation
        vocab = dataset.vocabulary()
    else:
        train = list(dataset)
        vocab = policy.vocab if policy is not None else None
    if not train:
        raise ValueError("training set is empty")
    if policy is None:
        policy = GRUPolicy(vocab, hidden=config.hidden, seed=config.seed)
    vocab = policy.vocab
    rng = np.random.default_rng(config.seed)
    opt = AdamW(policy.num_params, lr=config.lr, weight_decay=config.weight_decay)
    log = TrainLog(log_path, log_header)
    prompts = [vocab.encode(e.prompt) for e in train]
    refs = [vocab.encode(e.reference) for e in train]
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
        if scores["BLEU"] > result.best_score:
            result.best_score = scores["BLEU"]
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
            loss, grad = sft_loss_batch(policy, [prompts[i] for i in idx], [refs[i] for i in idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite SFT loss at step {step}", log.records)
            grad = grad_norm_clip(grad, config.max_grad_norm)
            lr = warmup_lr(config.lr, step, total_steps, config.warmup_frac)
            opt.step(policy.params, grad, lr)
            step += 1
            log.append({"step": step, "epoch": epoch, "loss": loss, "lr": lr,
                        "wall_time": round(time.perf_counter() - t0, 3)})
            if config.eval_every and step % config.eval_every == 0:
                validate(step)
        if not config.eval_every:
            validate(step)
    if config.eval_every and (not result.validation or result.validation[-1]["step"] != step):
        validate(step)
    if not validation:
        result.best_policy = clone_frozen(policy)
    return result
