"""Experiment harness: configs, seeded runs, evaluation reports and tables.

Every command takes an :class:`ExperimentConfig` and writes its artifacts
under ``config.out``.  Scores in reports are means over the test split,
multiplied by 100 and rounded to two decimals.  Each artifact carries the
config digest so results can be traced back to the exact settings.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import evaluate
from .grpo import TrainConfig, grpo_train
from .metrics import ALL_METRICS, Metric
from .policy import GRUPolicy, Policy, load_checkpoint, save_checkpoint
from .sft import SftConfig, sft_train
from .tasks import TASK_IDS, DatasetSplit, load_split, make_task, save_split

ARMS = ("BASE", "SFT", "GRPO", "MPGRPO")
DEFAULT_SEEDS = (0, 1, 2)
WORKERS_ENV = "TEXTGRPO_WORKERS"
METRIC_COLUMNS = [m.label for m in ALL_METRICS]
TABLE_COLUMNS = METRIC_COLUMNS + ["AVG"]
REPORT_FILES = ("report.json", "ablation.json", "eval_table.json")


class HarnessError(Exception):
    """Invalid experiment setup; ``category`` names the failure for the CLI."""

    category = "config"


class VocabularyMismatchError(HarnessError):
    category = "vocab_mismatch"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise HarnessError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise HarnessError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


# -- configuration -------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    name: str = "run"
    task: str = "CIPHER"
    arm: str = "GRPO"
    reward: str = "BLEU"
    data: dict = field(default_factory=lambda: {"seed": 0, "size": 5000, "params": {}})
    dataset: str | None = None
    train: dict = field(default_factory=dict)
    sft: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    rewards: list[str] = field(default_factory=list)
    arms: list[str] = field(default_factory=lambda: ["GRPO", "MPGRPO"])
    starts: list[str] = field(default_factory=lambda: ["cold"])
    init_checkpoint: str | None = None
    runs: list[str] = field(default_factory=list)
    out: str = "runs/run"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise HarnessError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise HarnessError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Digest of every setting that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out")
        return digest(d)

    def override(self, seed: int | None = None, out: str | None = None, arm: str | None = None,
                  reward: str | None = None, task: str | None = None) -> "ExperimentConfig":
        d = self.to_dict()
        if seed is not None:
            d["seeds"] = [int(seed)]
        if out is not None:
            d["out"] = out
        if arm is not None:
            d["arm"] = arm.upper()
        if reward is not None:
            d["reward"] = reward
            d["rewards"] = [r for r in reward.split(",") if r] if "," in reward else d["rewards"]
        if task is not None and task.upper() != d["task"]:
            d["task"] = task.upper()
            d["data"] = {**d["data"], "params": {}}
            d["dataset"] = None
        return ExperimentConfig.from_dict(d)

    def train_config(self, seed: int, arm: str | None = None, reward: str | None = None) -> TrainConfig:
        arm = arm or self.arm
        base = {**self.train, "seed": seed, "reward": reward or self.reward, "mixed_policy": arm == "MPGRPO"}
        return TrainConfig.from_dict(base).validate()

    def sft_config(self, seed: int) -> SftConfig:
        return SftConfig.from_dict({**self.sft, "seed": seed}).validate()

    def eval_settings(self) -> dict:
        default_len = self.train.get("max_completion_len", TrainConfig.max_completion_len)
        ev = {"temperature": 0.9, "top_p": 0.9, "max_len": default_len, "seed": 0, "limit": None}
        unknown = set(self.eval) - set(ev)
        if unknown:
            raise HarnessError(f"unknown eval settings: {sorted(unknown)}")
        return {**ev, **self.eval}

    def validate(self, command: str = "train") -> "ExperimentConfig":
        """Check every section the command will use before any work starts."""
        try:
            if self.task not in TASK_IDS:
                raise HarnessError(f"unknown task {self.task!r}; expected one of {TASK_IDS}")
            if self.arm not in ARMS:
                raise HarnessError(f"unknown arm {self.arm!r}; expected one of {ARMS}")
            Metric.parse(self.reward)
            for r in self.rewards:
                Metric.parse(r)
            if not self.seeds:
                raise HarnessError("at least one seed is required")
            if self.dataset is not None and not Path(self.dataset).is_dir():
                raise HarnessError(f"dataset directory {self.dataset} does not exist")
            if self.init_checkpoint is not None and not Path(self.init_checkpoint).is_file():
                raise HarnessError(f"init checkpoint {self.init_checkpoint} does not exist")
            self.eval_settings()
            arms = {self.arm}
            if command == "ablate":
                if not self.rewards:
                    raise HarnessError("ablate needs a non-empty 'rewards' list")
                if self.arm not in ("GRPO", "MPGRPO"):
                    raise HarnessError("ablate trains GRPO or MPGRPO arms")
                if self.starts not in (["cold"], ["sft"]):
                    raise HarnessError("ablate takes a single start, 'cold' or 'sft'")
                if self.starts == ["sft"]:
                    arms.add("SFT")
            if command == "compare":
                arms = set(self.arms)
                bad = arms - set(ARMS) - {"BASE"}
                if bad or not arms:
                    raise HarnessError(f"invalid compare arms {sorted(self.arms)}")
                if set(self.starts) - {"cold", "sft"} or not self.starts:
                    raise HarnessError("starts must be drawn from 'cold' and 'sft'")
                if "sft" in self.starts:
                    arms.add("SFT")
            if arms & {"GRPO", "MPGRPO"}:
                for s in self.seeds:
                    self.train_config(s, "GRPO")
            if "SFT" in arms:
                for s in self.seeds:
                    self.sft_config(s)
        except ValueError as exc:
            raise HarnessError(str(exc)) from None
        return self


# -- data --------------------------------------------------------------------------

def build_dataset(config: ExperimentConfig) -> DatasetSplit:
    if config.dataset is not None:
        split = load_split(config.dataset)
        if split.task_id and split.task_id != config.task:
            raise HarnessError(f"dataset {config.dataset} holds task {split.task_id}, config says {config.task}")
        return split
    d = config.data
    task = make_task(config.task, int(d.get("seed", 0)), **d.get("params", {}))
    return task.generate(int(d.get("size", 5000)), d.get("val_size"), d.get("test_size"))


def cmd_gen(config: ExperimentConfig) -> Path:
    """Generate the configured dataset and write it (plus manifest) to ``<out>/data``."""
    config.validate("gen")
    split = build_dataset(config)
    out = Path(config.out) / "data"
    try:
        save_split(out, split)
    except OSError as exc:
        raise HarnessError(f"cannot write dataset to {out}: {exc}") from None
    return out


# -- reports ----------------------------------------------------------------------

def score_row(scores: dict) -> dict:
    """Metric scores in [0, 1] keyed by Metric or label -> x100 row with AVG."""
    by_label = {}
    for k, v in scores.items():
        label = k if k in TABLE_COLUMNS else Metric.parse(k).label
        by_label[label] = 100.0 * float(v)
    row = {c: by_label[c] for c in METRIC_COLUMNS}
    row["AVG"] = float(np.mean([row[c] for c in METRIC_COLUMNS]))
    return row


def eval_report(policy: Policy, split: DatasetSplit, settings: dict, arm: str, config_digest: str,
                **extra) -> dict:
    examples = split.test[: settings["limit"]] if settings["limit"] else split.test
    scores = evaluate(policy, examples, temperature=settings["temperature"], top_p=settings["top_p"],
                      max_len=settings["max_len"], seed=settings["seed"])
    row = score_row(scores)
    return {
        "arm": arm,
        "task": split.task_id,
        "n": len(examples),
        "scores": {k: round(v, 2) for k, v in row.items()},
        "raw": row,
        "config_digest": config_digest,
        "vocab_digest": policy.vocab.digest(),
        **extra,
    }


def aggregate(rows: Sequence[dict]) -> tuple[dict, dict]:
    """Mean and sample std (0 for a single seed) per column."""
    mean = {c: float(np.mean([r[c] for r in rows])) for c in TABLE_COLUMNS}
    std = {c: float(np.std([r[c] for r in rows], ddof=1)) if len(rows) > 1 else 0.0 for c in TABLE_COLUMNS}
    mean["AVG"] = float(np.mean([mean[c] for c in METRIC_COLUMNS]))
    return mean, std


@dataclass
class Table:
    """Rows of x100 metric means keyed by a row label (an arm, a reward, ...)."""

    label: str
    rows: dict[str, dict] = field(default_factory=dict)
    stds: dict[str, dict] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    config_digest: str = ""

    def add(self, name: str, per_seed: Sequence[dict]) -> None:
        self.rows[name], self.stds[name] = aggregate(per_seed)
        self.seeds[name] = len(per_seed)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.label] + TABLE_COLUMNS + ["seeds", "config_digest"])
        for name, row in self.rows.items():
            w.writerow([name] + [f"{row[c]:.2f}" for c in TABLE_COLUMNS] + [self.seeds[name], self.config_digest])
        return buf.getvalue()

    def std_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.label] + TABLE_COLUMNS + ["seeds", "config_digest"])
        for name, row in self.stds.items():
            w.writerow([name] + [f"{row[c]:.2f}" for c in TABLE_COLUMNS] + [self.seeds[name], self.config_digest])
        return buf.getvalue()

    def to_markdown(self, title: str = "") -> str:
        lines = [f"### {title}", ""] if title else []
        lines.append("| " + " | ".join([self.label] + TABLE_COLUMNS) + " |")
        lines.append("|" + "---|" * (len(TABLE_COLUMNS) + 1))
        for name, row in self.rows.items():
            multi = self.seeds[name] > 1
            cells = [f"{row[c]:.2f}" + (f" ± {self.stds[name][c]:.2f}" if multi else "") for c in TABLE_COLUMNS]
            lines.append("| " + " | ".join([name] + cells) + " |")
        lines += ["", f"config digest `{self.config_digest}`; seeds per row: "
                  + ", ".join(f"{k}={v}" for k, v in self.seeds.items()), ""]
        return "\n".join(lines)

    def to_json(self) -> dict:
        r2 = lambda d: {k: {c: round(v, 2) for c, v in row.items()} for k, row in d.items()}
        return {"label": self.label, "columns": TABLE_COLUMNS, "rows": r2(self.rows), "std": r2(self.stds),
                "seeds": self.seeds, "config_digest": self.config_digest}

    def write(self, directory: Path, stem: str, title: str = "", extra: dict | None = None) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.csv").write_text(self.to_csv())
        if any(n > 1 for n in self.seeds.values()):
            (directory / f"{stem}_std.csv").write_text(self.std_csv())
        (directory / f"{stem}.md").write_text(self.to_markdown(title))
        doc = {**self.to_json(), **(extra or {})}
        (directory / f"{stem}.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_run_config(out: Path, config: ExperimentConfig) -> None:
    """Resolved config next to the results, without the output path so reruns elsewhere match bytewise."""
    d = config.to_dict()
    d.pop("out")
    write_json(out / "config.json", {**d, "config_digest": config.digest()})


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


# -- single runs ---------------------------------------------------------------------

def initial_policy(config: ExperimentConfig, split: DatasetSplit, seed: int, init_checkpoint: str | None = None) -> Policy:
    path = init_checkpoint or config.init_checkpoint
    vocab = split.vocabulary()
    if path:
        policy, _, _ = load_checkpoint(path)
        if policy.vocab.digest() != vocab.digest():
            raise VocabularyMismatchError(f"checkpoint {path} vocabulary does not match the dataset")
        return policy
    hidden = config.train.get("hidden", config.sft.get("hidden", 64))
    return GRUPolicy(vocab, hidden=hidden, seed=seed)


def training_summary(records: Sequence[dict], validation: Sequence[dict]) -> dict:
    """Timing-free digest of a training log: step count, KL and reward at the start and end.

    "Final" values average the last tenth of the steps (at least one step).
    """
    out: dict = {"steps": len(records)}
    if validation:
        out["best_val_bleu"] = round(100 * max(v["BLEU"] for v in validation), 2)
        out["init_val_bleu"] = round(100 * validation[0]["BLEU"], 2)
    if not records:
        return out
    tail = max(1, len(records) // 10)
    for key in ("mean_kl", "mean_reward", "loss"):
        series = [r[key] for r in records if key in r]
        if series:
            out[f"final_{key}"] = round(float(np.mean(series[-tail:])), 6)
            out[f"first_{key}"] = round(float(np.mean(series[:tail])), 6)
    if any("mean_kl" in r for r in records):
        out["max_mean_kl"] = round(float(max(r["mean_kl"] for r in records)), 6)
    return out


def run_arm(config: ExperimentConfig, split: DatasetSplit, arm: str, seed: int, run_dir: Path,
            reward: str | None = None, init_checkpoint: str | None = None) -> dict:
    """Train one arm for one seed; write checkpoints, log, validation curve and test report."""
    run_dir.mkdir(parents=True, exist_ok=True)
    cdig = config.digest()
    header = {"config_digest": cdig, "arm": arm, "seed": seed, "reward": reward or config.reward}
    policy = initial_policy(config, split, seed, init_checkpoint)
    validation: list[dict] = []
    log_records: list[dict] = []
    if arm == "BASE":
        final = best = policy
        opt = None
    elif arm == "SFT":
        res = sft_train(split, config.sft_config(seed), policy=policy, log_path=run_dir / "log.jsonl",
                        log_header=header)
        final, best, opt, validation = res.policy, res.best_policy, res.optimizer, res.validation
        log_records = res.log.records
    else:
        tc = config.train_config(seed, arm, reward)
        res = grpo_train(split, tc, policy=policy, log_path=run_dir / "log.jsonl", log_header=header)
        final, best, opt, validation = res.policy, res.best_policy, res.optimizer, res.validation
        log_records = res.log.records
    meta = {"config_digest": cdig, "arm": arm, "seed": seed, "reward": reward or config.reward}
    save_checkpoint(run_dir / "checkpoint_final.json", final, opt, meta=meta)
    save_checkpoint(run_dir / "checkpoint_best.json", best, None, meta=meta)
    if validation:
        write_csv(run_dir / "validation.csv", ["point", "step"] + METRIC_COLUMNS + ["config_digest"],
                  [[i, v["step"]] + [f"{100 * v[m.value]:.2f}" for m in ALL_METRICS] + [cdig]
                   for i, v in enumerate(validation)])
    report = eval_report(best, split, config.eval_settings(), arm, cdig, seed=seed,
                         reward=reward or config.reward, training=training_summary(log_records, validation))
    write_json(run_dir / "test_report.json", {k: v for k, v in report.items() if k != "raw"})
    return {"report": report, "validation": validation}


def _job(args) -> dict:
    config_dict, arm, seed, run_dir, reward, init = args
    config = ExperimentConfig.from_dict(config_dict)
    split = build_dataset(config)
    return run_arm(config, split, arm, seed, Path(run_dir), reward, init)


def run_jobs(config: ExperimentConfig, jobs: list[tuple]) -> list[dict]:
    """Run ``(arm, seed, run_dir, reward, init_checkpoint)`` jobs, in parallel when workers > 1."""
    payload = [(config.to_dict(), *j) for j in jobs]
    workers = min(worker_count(), len(payload))
    if workers <= 1:
        return [_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, payload))


# -- commands ----------------------------------------------------------------------

def cmd_train(config: ExperimentConfig) -> Table:
    """Train ``config.arm`` for every seed and write the seed-averaged test report."""
    config.validate("train")
    out = Path(config.out)
    write_run_config(out, config)
    results = run_jobs(config, [(config.arm, s, str(out / f"seed_{s}"), None, None) for s in config.seeds])
    table = Table("arm", config_digest=config.digest())
    table.add(config.arm, [r["report"]["raw"] for r in results])
    table.write(out, "report", f"{config.task} test scores (x100)",
                extra={"task": config.task, "n": results[0]["report"]["n"],
                       "training": {str(s): r["report"]["training"] for s, r in zip(config.seeds, results)}})
    return table


def cmd_eval(config: ExperimentConfig, checkpoint, dataset=None) -> dict:
    """Score a checkpoint on a dataset's test split; refuses mismatched vocabularies."""
    config.validate("eval")
    try:
        policy, _, meta = load_checkpoint(checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise HarnessError(f"cannot load checkpoint {checkpoint}: {exc}") from None
    if dataset is not None:
        config = config.override()
        config.dataset = str(dataset)
    split = build_dataset(config)
    manifest = Path(config.dataset) / "manifest.json" if config.dataset else None
    want = json.loads(manifest.read_text())["vocab_digest"] if manifest and manifest.exists() else split.vocabulary().digest()
    if policy.vocab.digest() != want:
        raise VocabularyMismatchError(
            f"checkpoint vocabulary {policy.vocab.digest()} does not match dataset vocabulary {want}")
    report = eval_report(policy, split, config.eval_settings(), meta.get("arm", config.arm), config.digest(),
                         checkpoint_digest=hashlib.sha256(Path(checkpoint).read_bytes()).hexdigest()[:16])
    out = Path(config.out)
    write_json(out / "eval.json", {k: v for k, v in report.items() if k != "raw"})
    table = Table("arm", config_digest=config.digest())
    table.add(report["arm"], [report["raw"]])
    table.write(out, "eval_table", f"{split.task_id} test scores (x100)")
    return report


def diagonal_summary(table: Table) -> dict:
    """How often the reward-matched metric strictly wins its row and its column (ties do not count)."""
    row_max, col_max, names = [], [], list(table.rows)
    for name in names:
        label = Metric.parse(name).label
        row = table.rows[name]
        if all(row[label] > row[c] for c in METRIC_COLUMNS if c != label):
            row_max.append(name)
        if all(row[label] > table.rows[n][label] for n in names if n != name):
            col_max.append(name)
    return {"rows": len(names), "row_max": row_max, "column_max": col_max}


def sft_inits(config: ExperimentConfig, out: Path) -> dict[int, str]:
    """Train the SFT arm per seed under ``out/sft_init``; return the best checkpoints to start from."""
    run_jobs(config, [("SFT", s, str(out / "sft_init" / f"seed_{s}"), None, None) for s in config.seeds])
    return {s: str(out / "sft_init" / f"seed_{s}" / "checkpoint_best.json") for s in config.seeds}


def cmd_ablate(config: ExperimentConfig) -> tuple[Table, dict]:
    """One GRPO run per reward (shared seeds); rewards x metrics table with AVG column."""
    config.validate("ablate")
    out = Path(config.out)
    write_run_config(out, config)
    rewards = [Metric.parse(r) for r in config.rewards]
    inits = sft_inits(config, out) if config.starts == ["sft"] else {s: config.init_checkpoint for s in config.seeds}
    jobs = [(config.arm, s, str(out / r.value / f"seed_{s}"), r.value, inits[s]) for r in rewards for s in config.seeds]
    results = run_jobs(config, jobs)
    table = Table("reward", config_digest=config.digest())
    for i, r in enumerate(rewards):
        chunk = results[i * len(config.seeds) : (i + 1) * len(config.seeds)]
        table.add(r.label, [c["report"]["raw"] for c in chunk])
    summary = diagonal_summary(table)
    table.write(out, "ablation", f"reward ablation on {config.task} (x100)", extra={"diagonal": summary})
    return table, summary


def _curve_points(validation: list[dict]) -> list[dict]:
    return [v for v in validation if v["step"] > 0]


def cmd_compare(config: ExperimentConfig) -> dict:
    """Per-epoch validation BLEU curves for each arm and start, plus a leader annotation."""
    config.validate("compare")
    out = Path(config.out)
    write_run_config(out, config)
    cdig = config.digest()
    inits: dict[int, str | None] = {s: None for s in config.seeds}
    summary: dict = {"config_digest": cdig, "starts": {}}
    curve_rows = []
    for start in config.starts:
        if start == "sft":
            inits = sft_inits(config, out)
        else:
            inits = {s: None for s in config.seeds}
        jobs = [(arm, s, str(out / start / arm / f"seed_{s}"), None, inits[s]) for arm in config.arms
                for s in config.seeds]
        results = run_jobs(config, jobs)
        table = Table("arm", config_digest=cdig)
        finals, bests = {}, {}
        for i, arm in enumerate(config.arms):
            chunk = results[i * len(config.seeds) : (i + 1) * len(config.seeds)]
            table.add(arm, [c["report"]["raw"] for c in chunk])
            series = [_curve_points(c["validation"]) for c in chunk]
            n_points = min(len(s) for s in series) if series else 0
            for e in range(n_points):
                vals = [100 * s[e]["BLEU"] for s in series]
                curve_rows.append([start, arm, e + 1, series[0][e]["step"], f"{np.mean(vals):.2f}",
                                   f"{np.std(vals, ddof=1) if len(vals) > 1 else 0.0:.2f}", cdig])
            finals[arm] = float(np.mean([100 * s[n_points - 1]["BLEU"] for s in series])) if n_points else 0.0
            bests[arm] = float(np.mean([max(100 * v["BLEU"] for v in s) for s in series])) if n_points else 0.0
        table.write(out / start, "test_report", f"{config.task} test scores, {start} start (x100)")
        summary["starts"][start] = {
            "final_val_bleu": {k: round(v, 2) for k, v in finals.items()},
            "best_val_bleu": {k: round(v, 2) for k, v in bests.items()},
            "leader_final": max(finals, key=lambda k: (finals[k], -config.arms.index(k))),
            "leader_best": max(bests, key=lambda k: (bests[k], -config.arms.index(k))),
        }
    write_csv(out / "curves.csv", ["start", "arm", "epoch", "step", "val_bleu", "val_bleu_std", "config_digest"],
              curve_rows)
    write_json(out / "compare.json", summary)
    lines = [f"### validation BLEU leaders on {config.task}", "", "| start | leader (final) | leader (best) |",
             "|---|---|---|"]
    for start, s in summary["starts"].items():
        lines.append(f"| {start} | {s['leader_final']} | {s['leader_best']} |")
    lines += ["", f"config digest `{cdig}`", ""]
    (out / "compare.md").write_text("\n".join(lines))
    return summary


def cmd_report(config: ExperimentConfig) -> Table:
    """Merge ``report.json`` files of finished runs into one arms x metrics table."""
    out = Path(config.out)
    paths = [Path(p) for p in config.runs] or sorted(p.parent for p in out.glob("*/report.json"))
    if not paths:
        raise HarnessError(f"no finished runs to merge under {out}")
    table = Table("run", config_digest=config.digest())
    for p in paths:
        found = [p / n for n in REPORT_FILES if (p / n).exists()] if p.is_dir() else [p]
        if not found or not found[0].exists():
            raise HarnessError(f"no report table in {p}")
        doc = json.loads(found[0].read_text())
        for name, row in doc["rows"].items():
            label = f"{p.name}:{name}" if len(paths) > 1 else name
            table.rows[label] = row
            table.stds[label] = doc["std"][name]
            table.seeds[label] = doc["seeds"][name]
    table.write(out, "summary", "merged test scores (x100)")
    return table
