"""The ten acceptance criteria, one test each.

Every test records a pass/fail line in ``conftest.CRITERIA``; the lines are
printed in the terminal summary.  Criteria 6-10 share one rerun of the
committed experiments (``experiments/reproduce.py``) into a temp directory
and compare it with the frozen outputs in ``experiments/results``.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from oracles import bleu_bruteforce, dapo_loss_bruteforce, enumerate_sequences, population_std, rouge_l_bruteforce, rouge_n_bruteforce
from textgrpo.gradcheck import check_gradient
from textgrpo.grpo import CompletionGroup, Member, TrainConfig, compute_advantages, dapo_loss, token_objective
from textgrpo.metrics import bleu, meteor_lite, rouge_l, rouge_n
from textgrpo.policy import GRUPolicy, TabularPolicy, logprob
from textgrpo.sft import sft_loss_batch
from textgrpo.vocab import Vocabulary, tokenize

ROOT = Path(__file__).resolve().parent.parent
EXPERIMENTS = ROOT / "experiments"
FROZEN = EXPERIMENTS / "results"
THRESHOLDS = json.loads((EXPERIMENTS / "thresholds.json").read_text())

VOCAB = Vocabulary(["x", "y"])
V = len(VOCAB)
EOS, BOS = VOCAB.eos_id, VOCAB.bos_id


def record(n: int, ok: bool, detail: str) -> None:
    conftest.CRITERIA[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1. metric oracles ----------------------------------------------------------------

def test_criterion_01_metric_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        cand = rng.integers(4, 10, size=rng.integers(0, 12)).tolist()
        ref = rng.integers(4, 10, size=rng.integers(1, 12)).tolist()
        pairs = [(bleu(cand, ref), bleu_bruteforce(cand, ref)), (rouge_n(cand, ref, 1), rouge_n_bruteforce(cand, ref, 1)),
                 (rouge_n(cand, ref, 2), rouge_n_bruteforce(cand, ref, 2)), (rouge_l(cand, ref), rouge_l_bruteforce(cand, ref))]
        worst = max(worst, max(abs(a - b) for a, b in pairs))
    mv = Vocabulary(["a", "b", "c", "d", "e"])
    ids = lambda s: tokenize(s, mv)
    fixtures = [
        (meteor_lite(ids("a b"), ids("c d")), 0.0),
        (meteor_lite(ids("a b c d"), ids("a b c d")), 0.9921875),
        (meteor_lite(ids("a b"), ids("b a")), 0.5),
        (meteor_lite(ids("a b c d"), ids("a b e c d")), 75 / 98),
    ]
    # hand-derived fractions; 75/98 is not a binary fraction, so allow its one-ulp rounding
    meteor_ok = all(abs(a - b) <= math.ulp(b) for a, b in fixtures)
    seconds = time.perf_counter() - start
    record(1, worst <= 1e-9 and meteor_ok and seconds < 5,
           f"max |delta| {worst:.1e} over 100 pairs, METEOR fixtures exact to 1 ulp={meteor_ok}, {seconds:.2f}s")


# -- 2. advantage invariants ----------------------------------------------------------

def test_criterion_02_advantage_invariants():
    rng = np.random.default_rng(7)
    worst_mean = worst_std = worst_shift = 0.0
    for _ in range(1000):
        r = rng.uniform(0, 1, size=rng.integers(2, 17))
        a = compute_advantages(r)
        worst_mean = max(worst_mean, abs(a.mean()))
        worst_std = max(worst_std, abs(population_std(a.tolist()) - 1))
        c = rng.uniform(-1, 1)
        worst_shift = max(worst_shift, float(np.max(np.abs(compute_advantages(r + c) - a))))
    constant_zero = all(not np.any(compute_advantages(np.full(k, v))) for k in (2, 5, 8) for v in (0.0, 0.37, 1.0))
    record(2, worst_mean < 1e-9 and worst_std < 1e-6 and constant_zero and worst_shift <= 1e-12,
           f"|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, shift {worst_shift:.1e}, constant->0 {constant_zero}")


# -- 3. gradient correctness ------------------------------------------------------------

def _dapo_fd(pol, ref, seed):
    rng = np.random.default_rng(seed)
    seqs = [rng.integers(4, V, size=rng.integers(1, 5)).tolist() + [EOS] for _ in range(5)]
    members = []
    for i, s in enumerate(seqs):
        if i == len(seqs) - 1:
            members.append(Member(s, np.zeros(len(s)), off_policy=True))
        else:
            # small drift keeps ratios off the clip kinks so differences are smooth
            members.append(Member(s, logprob(pol, [4, 5], s) + rng.uniform(-0.1, 0.1, len(s))))
    group = CompletionGroup([4, 5], members)
    adv = rng.normal(size=5)
    cfg = TrainConfig(beta=0.05)
    _, grad = dapo_loss(group, adv, pol, ref, cfg)
    return check_gradient(lambda: dapo_loss(group, adv, pol, ref, cfg)[0], grad, pol.params, 60, rng=seed)


def _sft_fd(pol):
    prompts, refs = [[4, 5], [5], []], [[5, 5, 4], [4], [5, 4]]
    _, grad = sft_loss_batch(pol, prompts, refs)
    return check_gradient(lambda: sft_loss_batch(pol, prompts, refs)[0], grad, pol.params, 60, rng=0)


def test_criterion_03_gradient_correctness():
    start = time.perf_counter()
    tab = lambda s: TabularPolicy(VOCAB, 2, seed=s, init_scale=1.0)
    gru = lambda s: GRUPolicy(VOCAB, 8, seed=s, init_scale=0.5)
    errs = {
        "sft/tabular": _sft_fd(tab(1)),
        "sft/gru": _sft_fd(gru(1)),
        "dapo/tabular": _dapo_fd(tab(4), tab(5), 0),
        "dapo/gru": _dapo_fd(gru(1), gru(2), 1),
    }
    seconds = time.perf_counter() - start
    ok = max(errs["sft/tabular"], errs["dapo/tabular"]) < 1e-8 and max(errs["sft/gru"], errs["dapo/gru"]) < 1e-4
    record(3, ok and seconds < 60,
           ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f" (60 coords each), {seconds:.1f}s")


# -- 4. brute-force loss oracle ------------------------------------------------------------

def test_criterion_04_bruteforce_loss_oracle():
    worst = 0.0
    n_groups = 0
    seqs = enumerate_sequences(list(range(V)), 3, EOS)
    cfg = TrainConfig(beta=0.05, clip_eps=0.2)
    for order in (0, 1, 2):
        pol = TabularPolicy(VOCAB, order, seed=order + 3, init_scale=1.0)
        ref = TabularPolicy(VOCAB, order, seed=order + 50, init_scale=1.0)
        for mixed in (False, True):
            rng = np.random.default_rng(10 * order + mixed)
            for start in range(0, len(seqs) - 5, 6):
                chunk = seqs[start : start + 6]
                members = []
                for i, s in enumerate(chunk):
                    if mixed and i == len(chunk) - 1:
                        members.append(Member(list(s), np.zeros(len(s)), off_policy=True))
                    else:
                        members.append(Member(list(s), logprob(pol, [4, 5], s) + rng.uniform(-0.4, 0.4, len(s))))
                group = CompletionGroup([4, 5], members)
                adv = rng.normal(size=len(chunk))
                loss, _ = dapo_loss(group, adv, pol, ref, cfg)
                oracle = dapo_loss_bruteforce(group.prompt, [(m.tokens, list(m.old_logprobs), m.off_policy)
                                                             for m in members], list(adv), pol.table.tolist(),
                                              ref.table.tolist(), order, V, BOS, cfg.clip_eps, cfg.beta)
                worst = max(worst, abs(loss - oracle))
                n_groups += 1
    record(4, worst <= 1e-10, f"max |delta| {worst:.1e} over {n_groups} groups of all completions up to length 3")


# -- 5. clipping semantics ------------------------------------------------------------------

def test_criterion_05_clipping_semantics():
    examples = token_objective(1.5, 1.0, 0.2) == pytest.approx(1.2, abs=1e-15) and \
        token_objective(0.5, -1.0, 0.2) == pytest.approx(-0.8, abs=1e-15)

    pol = TabularPolicy(VOCAB, 1, seed=5, init_scale=1.0)
    prompt, toks = [4], [4, 4, EOS]
    p = np.exp(logprob(pol, prompt, toks))
    group = CompletionGroup(prompt, [Member([5, EOS], logprob(pol, prompt, [5, EOS])),
                                     Member(toks, np.zeros(3), off_policy=True)])
    # pi < 1 - eps and A < 0: clipping would bind if it applied to the off-policy member
    never_clipped = bool(np.all(p < 0.5)) and all(
        dapo_loss(group, np.array([1.0, -1.0]), pol, None, TrainConfig(beta=0.0, clip_eps=eps))[0]
        == pytest.approx(-(2.0 - p.sum()) / 5, abs=1e-14) for eps in (1e-3, 0.2, 0.9))

    rng = np.random.default_rng(3)
    ref = TabularPolicy(VOCAB, 1, seed=9, init_scale=1.0)
    seqs = [[4, EOS], [5, 4, EOS], [4, 4, 4], [EOS]]
    inside = CompletionGroup([5], [Member(s, logprob(pol, [5], s) + rng.uniform(-0.15, 0.15, len(s))) for s in seqs])
    adv = rng.normal(size=4)
    clipped = dapo_loss(inside, adv, pol, ref, TrainConfig(beta=0.02, clip_eps=0.2))
    free = dapo_loss(inside, adv, pol, ref, TrainConfig(beta=0.02, clip_eps=1e9))
    identical = clipped[0] == free[0] and np.array_equal(clipped[1], free[1])
    record(5, examples and never_clipped and identical,
           f"worked examples {examples}, off-policy never clipped (weight = pi) {never_clipped}, "
           f"in-range clip no-op {identical}")


# -- 6-10. committed experiments ------------------------------------------------------------

@pytest.fixture(scope="module")
def rerun(tmp_path_factory):
    root = tmp_path_factory.mktemp("rerun")
    proc = subprocess.run([sys.executable, str(EXPERIMENTS / "reproduce.py"), "--out", str(root)],
                          capture_output=True, text=True, cwd=ROOT)
    assert proc.returncode == 0, proc.stderr
    timings = {}
    for line in proc.stdout.splitlines():
        doc = json.loads(line)
        timings[doc["name"]] = doc["seconds"]
    return root, timings


def _report(root: Path, name: str, file: str = "report.json") -> dict:
    return json.loads((root / name / file).read_text())


def test_criterion_06_training_efficacy(rerun):
    root, timings = rerun
    base = _report(root, "cipher_base")["rows"]["BASE"]["BLEU"]
    grpo = _report(root, "cipher_grpo")["rows"]["GRPO"]["BLEU"]
    threshold = THRESHOLDS["cipher_grpo_test_bleu"]
    seconds = timings["cipher_grpo"]
    ok = base < 5.0 and grpo >= threshold and grpo - base >= 30.0 and seconds < 15 * 60
    record(6, ok, f"test BLEU {base:.2f} -> {grpo:.2f} (+{grpo - base:.2f}), frozen threshold {threshold}, "
                  f"{seconds:.0f}s on one core")


def test_criterion_07_grpo_competitive_with_sft(rerun):
    root, _ = rerun
    rows = _report(root, "copyqa_compare", "cold/test_report.json")["rows"]
    sft, grpo = rows["SFT"]["BLEU"], rows["GRPO"]["BLEU"]
    record(7, grpo >= sft - 1.0, f"COPYQA best-validation test BLEU: GRPO {grpo:.2f} vs SFT {sft:.2f} "
                                 f"(base {rows['BASE']['BLEU']:.2f})")


def test_criterion_08_reward_ablation_diagonal(rerun):
    root, _ = rerun
    doc = _report(root, "cipher_ablation", "ablation.json")
    diag = doc["diagonal"]
    n_col, n_row = len(diag["column_max"]), len(diag["row_max"])
    # the criterion's quoted claim is per metric column; the row reading is reported alongside
    record(8, n_col >= 4, f"reward-matched row is best on its metric for {n_col}/5 metrics "
                          f"({', '.join(diag['column_max'])}); literal row-max reading {n_row}/5")


def test_criterion_09_kl_regularization(rerun):
    root, _ = rerun
    ceiling = json.loads((EXPERIMENTS / "cipher_grpo.json").read_text())["train"]["kl_ceiling"]
    reg = _report(root, "cipher_grpo")["training"]["0"]
    outcome = json.loads((root / "cipher_grpo_beta0" / "outcome.json").read_text())
    tripped = outcome["exit_code"] == 3
    ratio = math.inf
    if not tripped:
        free = _report(root, "cipher_grpo_beta0")["training"]["0"]
        ratio = free["final_mean_kl"] / reg["final_mean_kl"]
    ok = reg["max_mean_kl"] < ceiling and (tripped or ratio >= 5.0)
    detail = f"beta=0.02 max KL {reg['max_mean_kl']:.3f} < ceiling {ceiling}; beta=0 "
    detail += "tripped the KL guard" if tripped else f"final KL is {ratio:.2f}x the beta=0.02 value (needs >= 5x), guard not tripped"
    record(9, ok, detail)


def test_criterion_10_determinism(rerun):
    root, _ = rerun
    frozen = sorted(p.relative_to(FROZEN) for p in FROZEN.rglob("*") if p.is_file() and p.name != "log.jsonl")
    fresh = sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file() and p.name != "log.jsonl")
    differ = [str(p) for p in frozen if p in fresh and (FROZEN / p).read_bytes() != (root / p).read_bytes()]
    missing = sorted(set(map(str, frozen)) ^ set(map(str, fresh)))
    record(10, frozen and not differ and not missing,
           f"{len(frozen)} frozen files, {len(differ)} differ, {len(missing)} missing/extra"
           + (f": {(differ + missing)[:3]}" if differ or missing else ""))
