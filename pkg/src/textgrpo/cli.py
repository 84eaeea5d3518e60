"""Command-line entry point: ``textgrpo {gen,train,eval,ablate,compare,report}``.

Exit codes: 0 success, 2 bad usage or configuration, 3 a training guard
tripped (divergence), 4 checkpoint/dataset vocabulary mismatch, 5 I/O
failure.  Failures print ``error[<category>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .harness import ExperimentConfig, HarnessError, VocabularyMismatchError
from .policy.optim import NonFiniteGradientError
from .training import DivergenceError

EXIT_CODES = {"config": 2, "divergence": 3, "vocab_mismatch": 4, "io": 5}

COMMANDS = ("gen", "train", "eval", "ablate", "compare", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textgrpo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (JSON); defaults are used when omitted")
        p.add_argument("--seed", type=int, help="run a single seed instead of the config's seed list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--arm", choices=harness.ARMS, type=str.upper)
        p.add_argument("--reward", help="reward metric (comma-separated list for ablate)")
        p.add_argument("--task", choices=["CIPHER", "REVERSE", "COPYQA"], type=str.upper)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--dataset", help="dataset directory written by 'gen'")
        if name == "report":
            p.add_argument("runs", nargs="*", help="run directories holding report.json")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    config = config.override(seed=args.seed, out=args.out, arm=args.arm, reward=args.reward, task=args.task)
    if args.command == "report" and args.runs:
        config.runs = list(args.runs)
    return config


def dispatch(args) -> object:
    config = load_config(args)
    if args.command == "gen":
        return str(harness.cmd_gen(config))
    if args.command == "train":
        return harness.cmd_train(config).to_json()
    if args.command == "eval":
        report = harness.cmd_eval(config, args.checkpoint, args.dataset)
        return {k: v for k, v in report.items() if k != "raw"}
    if args.command == "ablate":
        table, summary = harness.cmd_ablate(config)
        return {**table.to_json(), "diagonal": summary}
    if args.command == "compare":
        return harness.cmd_compare(config)
    return harness.cmd_report(config).to_json()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        result = dispatch(args)
    except (DivergenceError, NonFiniteGradientError) as exc:
        return _fail("divergence", exc)
    except VocabularyMismatchError as exc:
        return _fail(exc.category, exc)
    except HarnessError as exc:
        return _fail(exc.category, exc)
    except OSError as exc:
        return _fail("io", exc)
    print(json.dumps(result, sort_keys=True, indent=1))
    return 0


def _fail(category: str, exc: Exception) -> int:
    print(f"error[{category}]: {exc}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
