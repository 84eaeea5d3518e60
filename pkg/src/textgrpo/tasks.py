"""Seeded synthetic transduction tasks and their dataset files.

Three tasks stand in for open-format generation problems:

* ``CIPHER``  -- a fixed seeded bijective substitution of every source word
  (optionally followed by swapping adjacent pairs);
* ``REVERSE`` -- the source words in reverse order;
* ``COPYQA``  -- the prompt lists ``key is value ... ;`` facts and asks for one
  key; the answer is that key's value phrase, or ``not known`` when the key
  is absent.

Each task uses several prompt templates, rotated by example index.  Source
utterances are unique across the train/validation/test splits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .policy.base import Policy, Trace
from .vocab import Vocabulary

CIPHER, REVERSE, COPYQA = "CIPHER", "REVERSE", "COPYQA"
TASK_IDS = (CIPHER, REVERSE, COPYQA)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def word_alphabet(size: int, prefix: str = "") -> list[str]:
    """``size`` distinct pronounceable words (``ba``, ``be``, ...), optionally prefixed."""
    words = [c + v for c in _CONSONANTS for v in _VOWELS]
    words += [c + v + c2 for c in _CONSONANTS for v in _VOWELS for c2 in "nrs"]
    if size > len(words):
        raise ValueError(f"alphabet size {size} too large")
    return [prefix + w for w in words[:size]]


@dataclass(frozen=True)
class Example:
    prompt: str
    reference: str
    task_id: str

    def __post_init__(self):
        if not self.reference.split():
            raise ValueError("reference must be nonempty")
        if self.task_id not in TASK_IDS:
            raise ValueError(f"unknown task id {self.task_id!r}")


@dataclass
class DatasetSplit:
    train: list[Example]
    validation: list[Example]
    test: list[Example]
    task_id: str = ""
    seed: int = 0
    params: dict = field(default_factory=dict)
    symbols: list[str] = field(default_factory=list)

    def all_examples(self) -> list[Example]:
        return self.train + self.validation + self.test

    def vocabulary(self) -> Vocabulary:
        if self.symbols:
            return Vocabulary(self.symbols)
        texts = [t for e in self.all_examples() for t in (e.prompt, e.reference)]
        return Vocabulary.from_texts(texts)

    def manifest(self) -> dict:
        vocab = self.vocabulary()
        return {
            "task_id": self.task_id,
            "seed": self.seed,
            "params": self.params,
            "sizes": {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)},
            "symbols": vocab.symbols[4:],
            "vocab_digest": vocab.digest(),
        }


# -- tasks ------------------------------------------------------------------------

class _Task:
    task_id = ""
    templates: Sequence[str] = ()

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def template_words(self) -> list[str]:
        words = []
        for t in self.templates:
            words += [w for w in t.split() if not w.startswith("{")]
        return sorted(set(words))

    def symbols(self) -> list[str]:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def draw_source(self) -> list[str]:
        raise NotImplementedError

    def render(self, source: list[str], index: int) -> str:
        raise NotImplementedError

    def solve_source(self, source: list[str]) -> list[str]:
        raise NotImplementedError

    def parse(self, prompt: str) -> list[str]:
        raise NotImplementedError

    def solve(self, prompt: str) -> str:
        """The data-generating rule: map a prompt to its reference text."""
        return " ".join(self.solve_source(self.parse(prompt)))

    def generate(self, size: int, val_size: int | None = None, test_size: int | None = None) -> DatasetSplit:
        val_size = size // 10 if val_size is None else val_size
        test_size = size // 10 if test_size is None else test_size
        total = size + val_size + test_size
        seen: set[str] = set()
        sources: list[list[str]] = []
        attempts = 0
        while len(sources) < total:
            src = self.draw_source()
            key = " ".join(src)
            attempts += 1
            if key in seen:
                if attempts > 50 * total + 1000:
                    raise ValueError("cannot draw enough distinct source utterances; enlarge the alphabet")
                continue
            seen.add(key)
            sources.append(src)
        examples = [
            Example(self.render(src, i), " ".join(self.solve_source(src)), self.task_id)
            for i, src in enumerate(sources)
        ]
        return DatasetSplit(
            train=examples[:size],
            validation=examples[size : size + val_size],
            test=examples[size + val_size :],
            task_id=self.task_id,
            seed=self.seed,
            params=self.params(),
            symbols=self.symbols(),
        )


class _SequenceTask(_Task):
    def __init__(self, seed: int, vocab_size: int = 10, length_range: tuple[int, int] = (3, 6)):
        super().__init__(seed)
        if vocab_size < 10:
            raise ValueError("vocab_size must be at least 10")
        lo, hi = length_range
        if not 1 <= lo <= hi:
            raise ValueError("invalid sentence length range")
        self.vocab_size = vocab_size
        self.length_range = (int(lo), int(hi))
        self.alphabet = word_alphabet(vocab_size)
        self._alpha_set = set(self.alphabet)

    def symbols(self) -> list[str]:
        return sorted(set(self.alphabet) | set(self.template_words()))

    def draw_source(self):
        n = int(self.rng.integers(self.length_range[0], self.length_range[1] + 1))
        return [self.alphabet[i] for i in self.rng.integers(0, self.vocab_size, size=n)]

    def render(self, source, index):
        t = self.templates[index % len(self.templates)]
        return t.replace("{src}", " ".join(source))

    def parse(self, prompt):
        return [w for w in prompt.split() if w in self._alpha_set]


class CipherTask(_SequenceTask):
    task_id = CIPHER
    templates = ("encode : {src} =", "translate {src} into code =", "{src} in cipher please =")

    def __init__(self, seed: int, vocab_size: int = 10, length_range=(3, 6), substitution: str = "random",
                 reorder: bool = False):
        super().__init__(seed, vocab_size, length_range)
        if substitution == "identity":
            perm = np.arange(vocab_size)
        elif substitution == "random":
            perm = np.random.default_rng([seed, 1]).permutation(vocab_size)
        else:
            raise ValueError("substitution must be 'random' or 'identity'")
        self.substitution = substitution
        self.reorder = reorder
        self.mapping = {self.alphabet[i]: self.alphabet[int(j)] for i, j in enumerate(perm)}

    def params(self):
        return {"vocab_size": self.vocab_size, "length_range": list(self.length_range),
                "substitution": self.substitution, "reorder": self.reorder}

    def solve_source(self, source):
        out = [self.mapping[w] for w in source]
        if self.reorder:
            for i in range(0, len(out) - 1, 2):
                out[i], out[i + 1] = out[i + 1], out[i]
        return out


class ReverseTask(_SequenceTask):
    task_id = REVERSE
    templates = ("reverse : {src} =", "say backwards {src} =", "{src} read in reverse =")

    def params(self):
        return {"vocab_size": self.vocab_size, "length_range": list(self.length_range)}

    def solve_source(self, source):
        return list(reversed(source))


UNKNOWN_ANSWER = "not known"


class CopyQATask(_Task):
    """Fact lookup.  A source utterance is the fact list plus the queried key."""

    task_id = COPYQA
    templates = (
        "facts : {facts} question : {key} ?",
        "given {facts} what is {key} ?",
        "{facts} now tell us {key} ?",
    )

    def __init__(self, seed: int, n_keys: int = 6, n_values: int = 10, facts_range=(1, 3), value_len_range=(1, 3),
                 absent_prob: float = 0.15):
        super().__init__(seed)
        if n_values < len(UNKNOWN_ANSWER.split()) or n_keys < 1:
            raise ValueError("need at least one key and a few value words")
        self.keys = word_alphabet(n_keys, prefix="k")
        self.values = word_alphabet(n_values)
        self.facts_range = (int(facts_range[0]), int(facts_range[1]))
        self.value_len_range = (int(value_len_range[0]), int(value_len_range[1]))
        if self.facts_range[1] > n_keys:
            raise ValueError("more facts per prompt than keys")
        self.absent_prob = absent_prob
        self._keys = set(self.keys)
        self._values = set(self.values)

    def params(self):
        return {"n_keys": len(self.keys), "n_values": len(self.values), "facts_range": list(self.facts_range),
                "value_len_range": list(self.value_len_range), "absent_prob": self.absent_prob}

    def symbols(self):
        extra = ["is", ";"] + UNKNOWN_ANSWER.split()
        return sorted(set(self.keys) | set(self.values) | set(self.template_words()) | set(extra))

    def draw_source(self):
        n = int(self.rng.integers(self.facts_range[0], self.facts_range[1] + 1))
        keys = [self.keys[i] for i in self.rng.choice(len(self.keys), size=n, replace=False)]
        src: list[str] = []
        for k in keys:
            m = int(self.rng.integers(self.value_len_range[0], self.value_len_range[1] + 1))
            src += [k, "is"] + [self.values[i] for i in self.rng.integers(0, len(self.values), size=m)] + [";"]
        absent = [k for k in self.keys if k not in keys]
        if absent and self.rng.random() < self.absent_prob:
            q = absent[int(self.rng.integers(len(absent)))]
        else:
            q = keys[int(self.rng.integers(len(keys)))]
        return src + [q]

    def render(self, source, index):
        t = self.templates[index % len(self.templates)]
        return t.replace("{facts}", " ".join(source[:-1])).replace("{key}", source[-1])

    def parse(self, prompt):
        words = prompt.split()
        key_pos = [i for i, w in enumerate(words) if w in self._keys]
        if not key_pos:
            return []
        src: list[str] = []
        for i in key_pos[:-1]:
            j = i + 2
            vals = []
            while j < len(words) and words[j] in self._values:
                vals.append(words[j])
                j += 1
            src += [words[i], "is"] + vals + [";"]
        return src + [words[key_pos[-1]]]

    def solve_source(self, source):
        if not source:
            return UNKNOWN_ANSWER.split()
        query = source[-1]
        facts = source[:-1]
        i = 0
        while i < len(facts):
            key = facts[i]
            j = i + 2
            vals = []
            while j < len(facts) and facts[j] != ";":
                vals.append(facts[j])
                j += 1
            if key == query:
                return vals
            i = j + 1
        return UNKNOWN_ANSWER.split()


def make_task(task_id: str, seed: int, **params) -> _Task:
    cls = {CIPHER: CipherTask, REVERSE: ReverseTask, COPYQA: CopyQATask}[task_id.upper()]
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return cls(seed, **params)


def gen_cipher(seed: int, size: int, sentence_length_range=(3, 6), vocab_size: int = 10, **kw) -> DatasetSplit:
    split_kw = {k: kw.pop(k) for k in ("val_size", "test_size") if k in kw}
    return CipherTask(seed, vocab_size, sentence_length_range, **kw).generate(size, **split_kw)


def gen_reverse(seed: int, size: int, sentence_length_range=(3, 6), vocab_size: int = 10, **kw) -> DatasetSplit:
    return ReverseTask(seed, vocab_size, sentence_length_range).generate(size, **kw)


def gen_copyqa(seed: int, size: int, **kw) -> DatasetSplit:
    split_kw = {k: kw.pop(k) for k in ("val_size", "test_size") if k in kw}
    return CopyQATask(seed, **kw).generate(size, **split_kw)


def task_from_split(split: DatasetSplit) -> _Task:
    return make_task(split.task_id, split.seed, **split.params)


# -- oracle pseudo-policy ----------------------------------------------------------

class OraclePolicy(Policy):
    """Deterministic pseudo-policy that emits the task rule's answer, then EOS."""

    kind = "oracle"

    def __init__(self, task: _Task, vocab: Vocabulary, margin: float = 1e4):
        self.task = task
        self.vocab = vocab
        self.margin = margin
        self.params = np.zeros(0)

    def descriptor(self):
        return {"kind": self.kind}

    def clone(self):
        return OraclePolicy(self.task, self.vocab, self.margin)

    def _target(self, prompt: Sequence[int]) -> list[int]:
        text = self.vocab.decode(prompt, strip_eos=False)
        return self.vocab.encode(self.task.solve(text)) + [self.vocab.eos_id]

    def _logits(self, target: list[int], pos: int) -> np.ndarray:
        row = np.zeros(len(self.vocab))
        row[target[min(pos, len(target) - 1)]] = self.margin
        return row

    def start(self, prompts):
        state = [(self._target(p), 0) for p in prompts]
        return state, np.stack([self._logits(t, i) for t, i in state])

    def advance(self, state, tokens):
        state = [(t, i + 1) for t, i in state]
        return state, np.stack([self._logits(t, i) for t, i in state])

    def forward(self, prompts, completions):
        from .policy.base import log_softmax

        out = []
        for p, c in zip(prompts, completions):
            target = self._target(p)
            rows = np.stack([self._logits(target, i) for i in range(len(c))]) if len(c) else np.zeros((0, len(self.vocab)))
            out.append(log_softmax(rows)[np.arange(len(c)), np.asarray(c, dtype=np.int64)] if len(c) else np.zeros(0))
        return Trace(out)

    def backward(self, trace, weights):
        return np.zeros(0)


# -- persistence ------------------------------------------------------------------

SPLIT_NAMES = ("train", "validation", "test")


def save_examples(path, examples: Iterable[Example]) -> None:
    with open(path, "w") as f:
        for e in examples:
            f.write(json.dumps({"prompt": e.prompt, "reference": e.reference, "task_id": e.task_id},
                               sort_keys=True) + "\n")


def load_examples(path) -> list[Example]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Example(rec["prompt"], rec["reference"], rec["task_id"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed dataset record ({exc})") from None
    return out


def save_split(directory, split: DatasetSplit) -> Path:
    """Write ``train/validation/test.jsonl`` plus a ``manifest.json`` sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        save_examples(d / f"{name}.jsonl", getattr(split, name))
    manifest = split.manifest()
    manifest["files"] = {
        name: hashlib.sha256((d / f"{name}.jsonl").read_bytes()).hexdigest()[:16] for name in SPLIT_NAMES
    }
    (d / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return d


def load_split(directory) -> DatasetSplit:
    d = Path(directory)
    parts = {name: load_examples(d / f"{name}.jsonl") if (d / f"{name}.jsonl").exists() else []
             for name in SPLIT_NAMES}
    mpath = d / "manifest.json"
    if mpath.exists():
        m = json.loads(mpath.read_text())
        return DatasetSplit(**parts, task_id=m["task_id"], seed=m["seed"], params=m["params"],
                            symbols=m["symbols"])
    task_ids = {e.task_id for e in parts["train"] + parts["validation"] + parts["test"]}
    return DatasetSplit(**parts, task_id=task_ids.pop() if len(task_ids) == 1 else "")


def split_as_dict(split: DatasetSplit) -> dict:
    return {name: [asdict(e) for e in getattr(split, name)] for name in SPLIT_NAMES}
