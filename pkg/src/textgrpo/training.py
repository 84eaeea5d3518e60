"""Plumbing shared by the GRPO and SFT loops: schedules, logs, guards, batching."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DivergenceError(RuntimeError):
    """A training guard tripped (KL ceiling exceeded or non-finite loss)."""

    category = "divergence"

    def __init__(self, message: str, log: "list[dict] | None" = None):
        super().__init__(message)
        self.log = log or []


def warmup_lr(base_lr: float, step: int, total_steps: int, warmup_frac: float) -> float:
    """Linear warm-up over ``warmup_frac * total_steps`` steps, then constant.

    ``step`` is 0-based; the first step already gets a nonzero rate.
    """
    warm = int(math.ceil(warmup_frac * total_steps))
    if warm <= 0 or step >= warm:
        return base_lr
    return base_lr * (step + 1) / warm


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def steps_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def _round_floats(obj, ndigits: int = 10):
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, ndigits) for v in obj]
    return obj


class TrainLog:
    """Append-only list of step records, optionally mirrored to a JSON-lines file.

    A ``header`` dict, when given, is written as the first line under the
    key ``"header"`` (provenance such as the config digest).
    """

    def __init__(self, path: "str | Path | None" = None, header: "dict | None" = None):
        self.records: list[dict] = []
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps({"header": header}, sort_keys=True) + "\n" if header else "")

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self.path:
            with open(self.path, "a") as f:
                f.write(json.dumps(_round_floats(record), sort_keys=True) + "\n")

    def series(self, key: str) -> list:
        return [r[key] for r in self.records if key in r]

    def __len__(self) -> int:
        return len(self.records)


def read_log(path) -> list[dict]:
    """Step records of a log file (the header line, if any, is skipped)."""
    with open(path) as f:
        records = [json.loads(line) for line in f if line.strip()]
    return [r for r in records if "header" not in r]


def read_log_header(path) -> dict:
    with open(path) as f:
        first = f.readline()
    rec = json.loads(first) if first.strip() else {}
    return rec.get("header", {})


def grad_norm_clip(grad: np.ndarray, max_norm: "float | None") -> np.ndarray:
    if not max_norm:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad


def mean_or_zero(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0
