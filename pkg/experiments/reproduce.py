"""Rerun every committed experiment and write its outputs under one root.

    python3 experiments/reproduce.py                # refresh experiments/results
    python3 experiments/reproduce.py --out /tmp/r   # rerun elsewhere, e.g. to diff against the frozen files

Each run directory also gets ``outcome.json`` with the CLI exit code and the
diagnostic line, so a run that trips a guard is a reproducible result too.
"""

import argparse
import contextlib
import io
import json
import sys
import time
from pathlib import Path

from textgrpo import cli

HERE = Path(__file__).resolve().parent

# (name, subcommand); the config is experiments/<name>.json
EXPERIMENTS = [
    ("cipher_base", "train"),
    ("cipher_grpo", "train"),
    ("cipher_grpo_beta0", "train"),
    ("copyqa_compare", "compare"),
    ("cipher_ablation", "ablate"),
]


def run(name: str, command: str, root: Path) -> dict:
    out = root / name
    err = io.StringIO()
    start = time.perf_counter()
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(err):
        code = cli.main([command, "--config", str(HERE / f"{name}.json"), "--out", str(out)])
    seconds = time.perf_counter() - start
    out.mkdir(parents=True, exist_ok=True)
    outcome = {"command": command, "exit_code": code, "diagnostic": err.getvalue().strip()}
    (out / "outcome.json").write_text(json.dumps(outcome, indent=2, sort_keys=True) + "\n")
    return {**outcome, "seconds": round(seconds, 1)}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(HERE / "results"))
    ap.add_argument("--only", nargs="*", help="subset of experiment names")
    args = ap.parse_args(argv)
    root = Path(args.out)
    for name, command in EXPERIMENTS:
        if args.only and name not in args.only:
            continue
        res = run(name, command, root)
        print(json.dumps({"name": name, **res}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
