"""Drive the command-line harness end to end on a tiny config.

Run:  python3 demos/harness_pipeline.py
"""

import json
import pathlib
import tempfile

from textgrpo.cli import main

config = {
    "name": "demo",
    "task": "COPYQA",
    "data": {"seed": 0, "size": 200, "params": {}},
    "train": {"epochs": 2, "batch_size": 8, "hidden": 16, "max_completion_len": 8, "lr": 1e-2},
    "sft": {"epochs": 2, "hidden": 16, "max_completion_len": 8, "lr": 1e-2},
    "seeds": [0, 1],
    "rewards": ["BLEU", "ROUGE-L"],
    "arms": ["SFT", "GRPO", "MPGRPO"],
}

with tempfile.TemporaryDirectory() as tmp:
    root = pathlib.Path(tmp)
    cfg = root / "demo.json"
    cfg.write_text(json.dumps(config))
    out = str(root / "out")

    main(["gen", "--config", str(cfg), "--out", out])
    main(["train", "--config", str(cfg), "--arm", "GRPO", "--out", out + "/grpo"])
    print((root / "out/grpo/report.md").read_text())

    main(["ablate", "--config", str(cfg), "--out", out + "/ablate"])
    print((root / "out/ablate/ablation.md").read_text())

    main(["compare", "--config", str(cfg), "--out", out + "/compare"])
    print((root / "out/compare/curves.csv").read_text())
