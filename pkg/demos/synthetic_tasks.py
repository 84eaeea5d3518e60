"""The three synthetic transduction tasks and their rule-following oracle.

Run:  python3 demos/synthetic_tasks.py
"""

import tempfile

from textgrpo.evaluation import evaluate
from textgrpo.tasks import OraclePolicy, gen_cipher, gen_copyqa, gen_reverse, load_split, save_split, task_from_split

splits = {
    "cipher": gen_cipher(0, size=200, vocab_size=30),
    "reverse": gen_reverse(0, size=200),
    "copyqa": gen_copyqa(0, size=200),
}

for name, split in splits.items():
    print(f"== {name}: {len(split.train)}/{len(split.validation)}/{len(split.test)} examples, "
          f"{len(split.vocabulary())} symbols")
    # prompts rotate through three phrasings
    for ex in split.train[:3]:
        print(f"   {ex.prompt!r:60s} -> {ex.reference!r}")

    # the data-generating rule, wrapped as a deterministic policy, is perfect
    oracle = OraclePolicy(task_from_split(split), split.vocabulary())
    scores = evaluate(oracle, split.test)
    print("   oracle BLEU x100:", round(100 * scores[next(iter(scores))], 2))

# datasets persist as JSON lines plus a manifest with the generator settings
with tempfile.TemporaryDirectory() as d:
    save_split(d, splits["copyqa"])
    assert load_split(d) == splits["copyqa"]
    print("\nround trip through", d, "ok")
