from .base import Policy, Trace, clone_frozen, grad_weighted_logprob, log_softmax, logprob, sample, sample_batch
from .checkpoint import load_checkpoint, save_checkpoint
from .neural import GRUPolicy
from .optim import AdamW, NonFiniteGradientError, optimizer_step
from .tabular import TabularPolicy

__all__ = [
    "AdamW", "GRUPolicy", "NonFiniteGradientError", "Policy", "TabularPolicy", "Trace", "clone_frozen",
    "grad_weighted_logprob", "load_checkpoint", "log_softmax", "logprob", "optimizer_step", "sample",
    "sample_batch", "save_checkpoint",
]
