"""GRPO with text-similarity rewards on synthetic transduction tasks."""

from .metrics import ALL_METRICS, Metric, bleu, meteor_lite, reward, rouge_l, rouge_n
from .vocab import Vocabulary, tokenize

__version__ = "0.1.0"
