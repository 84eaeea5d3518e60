"""Checkpoint files: JSON header with base64-encoded little-endian float64 arrays.

The encoding is exact, so parameters round-trip bit for bit, and the output
is a deterministic function of its contents.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ..vocab import Vocabulary
from .base import Policy
from .neural import GRUPolicy
from .optim import AdamW
from .tabular import TabularPolicy

FORMAT_VERSION = 1
POLICY_KINDS = {"tabular": TabularPolicy, "gru": GRUPolicy}


def _enc(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _dec(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)


def save_checkpoint(path, policy: Policy, optimizer: AdamW | None = None, meta: dict | None = None) -> None:
    doc = {
        "format": "textgrpo-checkpoint",
        "version": FORMAT_VERSION,
        "vocab": policy.vocab.symbols,
        "vocab_digest": policy.vocab.digest(),
        "arch": policy.descriptor(),
        "params": _enc(policy.params),
        "meta": meta or {},
    }
    if optimizer is not None:
        st = optimizer.state_dict()
        st["m"], st["v"] = _enc(st["m"]), _enc(st["v"])
        doc["optimizer"] = st
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> tuple[Policy, AdamW | None, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "textgrpo-checkpoint":
        raise ValueError(f"{path}: not a textgrpo checkpoint")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    vocab = Vocabulary(doc["vocab"])
    arch = doc["arch"]
    policy = POLICY_KINDS[arch["kind"]].from_descriptor(vocab, arch, _dec(doc["params"]))
    opt = None
    if "optimizer" in doc:
        st = dict(doc["optimizer"])
        st["m"], st["v"] = _dec(st["m"]), _dec(st["v"])
        opt = AdamW.from_state_dict(st)
    return policy, opt, doc.get("meta", {})
