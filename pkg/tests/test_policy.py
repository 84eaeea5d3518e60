import math

import numpy as np
import pytest

from textgrpo.gradcheck import check_gradient
from textgrpo.policy import (
    AdamW,
    GRUPolicy,
    NonFiniteGradientError,
    TabularPolicy,
    clone_frozen,
    grad_weighted_logprob,
    load_checkpoint,
    logprob,
    optimizer_step,
    sample,
    sample_batch,
    save_checkpoint,
)
from textgrpo.policy.base import log_softmax
from textgrpo.vocab import Vocabulary

from oracles import _table_logprob, enumerate_sequences

VOCAB = Vocabulary([f"w{i}" for i in range(8)])
V = len(VOCAB)
EOS = VOCAB.eos_id


def random_tabular(order=1, seed=0, scale=1.0):
    return TabularPolicy(VOCAB, order, seed=seed, init_scale=scale)


def random_gru(seed=0, hidden=12, scale=0.5):
    return GRUPolicy(VOCAB, hidden, seed=seed, init_scale=scale)


def deterministic_tabular(order=1, margin=1e3, seed=0):
    """Every context row puts all mass on one seeded token."""
    pol = TabularPolicy(VOCAB, order, params=np.zeros(V**order * V))
    rng = np.random.default_rng(seed)
    pol.table[np.arange(pol.table.shape[0]), rng.integers(4, V, size=pol.table.shape[0])] = margin
    return pol


def random_seqs(rng, n, lo, hi, low_id=0):
    return [rng.integers(low_id, V, size=rng.integers(lo, hi + 1)).tolist() for _ in range(n)]


POLICIES = [
    pytest.param(lambda: random_tabular(0), id="tabular0"),
    pytest.param(lambda: random_tabular(1), id="tabular1"),
    pytest.param(lambda: random_tabular(2), id="tabular2"),
    pytest.param(random_gru, id="gru"),
]


@pytest.mark.parametrize("make", POLICIES)
def test_next_token_distribution_normalized(make):
    pol = make()
    rng = np.random.default_rng(1)
    for _ in range(100):
        prompt = rng.integers(0, V, size=rng.integers(0, 5)).tolist()
        prefix = rng.integers(0, V, size=rng.integers(0, 5)).tolist()
        assert abs(np.exp(pol.next_token_logprobs(prompt, prefix)).sum() - 1.0) < 1e-9


@pytest.mark.parametrize("make", POLICIES)
def test_forward_matches_incremental_decoding(make):
    pol = make()
    rng = np.random.default_rng(2)
    prompts = random_seqs(rng, 5, 0, 4)
    comps = random_seqs(rng, 5, 1, 5)
    batch = pol.forward(prompts, comps).logprobs
    for p, c, lp in zip(prompts, comps, batch):
        single = [pol.next_token_logprobs(p, c[:t])[c[t]] for t in range(len(c))]
        np.testing.assert_allclose(lp, single, atol=1e-12)
        assert np.all(lp <= 0)


def test_logprob_uniform_policy():
    pol = TabularPolicy(VOCAB, 1, params=np.zeros(V * V))
    lp = logprob(pol, [4, 5], [6, 7, EOS])
    np.testing.assert_allclose(lp, -math.log(V), atol=1e-15)


def test_logprob_deterministic_greedy_sequence_is_zero():
    pol = deterministic_tabular()
    (toks, lps), = sample(pol, [4], 1, max_len=6, rng=0)
    assert np.all(logprob(pol, [4], toks) == 0.0)
    assert np.all(lps == 0.0)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_tabular_logprob_matches_table_walk(order):
    pol = random_tabular(order, seed=3)
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = rng.integers(0, V, size=rng.integers(0, 4)).tolist()
        c = rng.integers(0, V, size=rng.integers(1, 6)).tolist()
        walk = _table_logprob(pol.table.tolist(), order, V, VOCAB.bos_id, p, c)
        np.testing.assert_allclose(logprob(pol, p, c), walk, atol=1e-12)


def test_logprob_rejects_bad_tokens():
    pol = random_tabular()
    with pytest.raises(ValueError):
        logprob(pol, [4], [V + 3])
    with pytest.raises(ValueError):
        logprob(pol, [4], [])


# -- sampling ----------------------------------------------------------------------

def test_sample_deterministic_policy_copies():
    pol = deterministic_tabular(order=2)
    out = sample(pol, [4, 5], 4, max_len=7, rng=1)
    assert all(o[0] == out[0][0] for o in out)
    # greedy walk
    hist, greedy = [4, 5, VOCAB.bos_id], []
    for _ in range(7):
        tok = int(np.argmax(pol.table[pol.context_index(hist[-2:])]))
        greedy.append(tok)
        hist.append(tok)
        if tok == EOS:
            break
    assert out[0][0] == greedy


def test_sample_high_temperature_is_uniform():
    pol = TabularPolicy(VOCAB, 0, params=np.zeros(V))
    n = 10_000
    out = sample(pol, [4], n, temperature=1e6, max_len=1, rng=7)
    counts = np.bincount([toks[0] for toks, _ in out], minlength=V)
    p = 1 / V
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_sample_seed_determinism():
    pol = random_gru()
    a = sample(pol, [4, 5, 6], 5, max_len=8, rng=11)
    b = sample(pol, [4, 5, 6], 5, max_len=8, rng=11)
    assert [x[0] for x in a] == [x[0] for x in b]
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))


@pytest.mark.parametrize("make", POLICIES)
def test_sampled_logprobs_are_honest(make):
    pol = make()
    groups = sample_batch(pol, [[4, 5], [6], []], 6, temperature=1.0, max_len=6, rng=5)
    for prompt, group in zip([[4, 5], [6], []], groups):
        for toks, lps in group:
            assert 1 <= len(toks) <= 6
            assert EOS not in toks[:-1]
            assert len(toks) == 6 or toks[-1] == EOS
            np.testing.assert_allclose(lps, logprob(pol, prompt, toks), atol=1e-9)


def test_top_p_restricts_support():
    pol = TabularPolicy(VOCAB, 0, params=np.arange(V, dtype=float) * 3.0)
    out = sample(pol, [], 500, top_p=0.9, max_len=1, rng=0)
    probs = np.exp(log_softmax(pol.table[0]))
    order = np.argsort(-probs)
    nucleus = set(order[: np.searchsorted(np.cumsum(probs[order]), 0.9) + 1].tolist())
    assert {toks[0] for toks, _ in out} <= nucleus


def test_sample_rejects_bad_args():
    pol = random_tabular()
    for kw in [dict(count=0), dict(temperature=0.0), dict(top_p=0.0), dict(max_len=0)]:
        args = dict(count=1, temperature=1.0, top_p=1.0, max_len=3) | kw
        with pytest.raises(ValueError):
            sample(pol, [4], **args)


def test_tabular_enumeration_exactness():
    """Enumerating every completion of length <= 4 reproduces analytic expectations."""
    logits = np.random.default_rng(4).normal(size=V)
    pol = TabularPolicy(VOCAB, 0, params=logits.copy())
    probs = np.exp(log_softmax(logits))
    q = probs[EOS]
    L = 4
    seqs = enumerate_sequences(list(range(V)), L, EOS)
    weights = [math.exp(float(logprob(pol, [], s).sum())) for s in seqs]
    assert abs(sum(weights) - 1.0) < 1e-12
    mean_len = sum(w * len(s) for w, s in zip(weights, seqs))
    analytic = sum(k * q * (1 - q) ** (k - 1) for k in range(1, L)) + L * (1 - q) ** (L - 1)
    assert abs(mean_len - analytic) < 1e-12
    # bounded statistic: fraction of tokens equal to symbol 4
    frac = sum(w * s.count(4) / len(s) for w, s in zip(weights, seqs))
    p4 = probs[4]
    analytic_frac = 0.0
    for k in range(1, L + 1):
        # k tokens: the first k-1 exclude EOS; a length-L sequence has an unconstrained last token
        p_len = (1 - q) ** (k - 1) * (q if k < L else 1.0)
        expected_count = (k - 1) * p4 / (1 - q) + (p4 if k == L else 0.0)
        analytic_frac += p_len * expected_count / k
    assert abs(frac - analytic_frac) < 1e-12


# -- gradients -----------------------------------------------------------------------

def _objective(pol, prompts, comps, weights):
    return lambda: sum(float(np.dot(w, lp)) for w, lp in zip(weights, pol.forward(prompts, comps).logprobs))


@pytest.mark.parametrize("make", POLICIES)
def test_grad_weighted_logprob_finite_differences(make):
    pol = make()
    rng = np.random.default_rng(6)
    prompts = random_seqs(rng, 4, 0, 4)
    comps = random_seqs(rng, 4, 1, 5)
    weights = [rng.normal(size=len(c)) for c in comps]
    grad = pol.backward(pol.forward(prompts, comps), weights)
    err = check_gradient(_objective(pol, prompts, comps, weights), grad, pol.params, n_coords=200, rng=0)
    assert err < 1e-4


@pytest.mark.parametrize("make", POLICIES)
def test_grad_zero_weights_and_linearity(make):
    pol = make()
    prompt, comp = [4, 5], [6, 7, 8, EOS]
    assert not np.any(grad_weighted_logprob(pol, prompt, comp, np.zeros(4)))
    rng = np.random.default_rng(8)
    w1, w2 = rng.normal(size=4), rng.normal(size=4)
    g12 = grad_weighted_logprob(pol, prompt, comp, w1 + w2)
    g1 = grad_weighted_logprob(pol, prompt, comp, w1)
    g2 = grad_weighted_logprob(pol, prompt, comp, w2)
    assert np.max(np.abs(g12 - (g1 + g2))) < 1e-10


def test_grad_shape_mismatch():
    with pytest.raises(ValueError):
        grad_weighted_logprob(random_gru(), [4], [5, 6], [1.0])


def test_gru_parameter_budget():
    big = Vocabulary([f"s{i}" for i in range(124)])
    pol = GRUPolicy(big, hidden=64)
    assert len(big) == 128
    assert pol.num_params < 100_000
    assert np.all(np.abs(pol.params) <= 0.08)


# -- optimizer --------------------------------------------------------------------------

def test_adamw_zero_gradient_no_decay():
    theta = np.array([1.0, -2.0, 3.0])
    opt = AdamW(3, lr=0.1)
    opt.step(theta, np.zeros(3))
    np.testing.assert_array_equal(theta, [1.0, -2.0, 3.0])
    assert opt.step_count == 1


def test_adamw_first_step():
    theta = np.array([0.5])
    opt = AdamW(1, lr=0.1, eps=1e-8)
    theta, opt = optimizer_step(opt, theta, np.array([1.0]))
    # bias-corrected moments are exactly g and g^2 after one step
    assert theta[0] == pytest.approx(0.5 - 0.1 / (1 + 1e-8), abs=1e-15)


def test_adamw_decoupled_decay():
    theta = np.array([2.0, -4.0])
    opt = AdamW(2, lr=0.1, weight_decay=0.5)
    opt.step(theta, np.zeros(2))
    np.testing.assert_allclose(theta, np.array([2.0, -4.0]) * (1 - 0.1 * 0.5), atol=1e-15)


def test_adamw_rejects_non_finite():
    opt = AdamW(2)
    with pytest.raises(NonFiniteGradientError):
        opt.step(np.zeros(2), np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        opt.step(np.zeros(3), np.zeros(3))


# -- snapshots and checkpoints -----------------------------------------------------------

@pytest.mark.parametrize("make", POLICIES)
def test_clone_frozen_isolated(make):
    pol = make()
    snap = clone_frozen(pol)
    prompt, comp = [4], [5, 6, EOS]
    np.testing.assert_array_equal(logprob(snap, prompt, comp), logprob(pol, prompt, comp))
    before = logprob(snap, prompt, comp).copy()
    pol.params += 0.3
    np.testing.assert_array_equal(logprob(snap, prompt, comp), before)
    with pytest.raises(ValueError):
        snap.params[0] = 1.0


@pytest.mark.parametrize("make", POLICIES)
def test_checkpoint_round_trip(tmp_path, make):
    pol = make()
    opt = AdamW(pol.num_params, lr=0.01, weight_decay=0.1)
    opt.step(pol.params, np.random.default_rng(0).normal(size=pol.num_params))
    path = tmp_path / "ck.json"
    save_checkpoint(path, pol, opt, meta={"note": "x"})
    pol2, opt2, meta = load_checkpoint(path)
    assert pol2.params.tobytes() == pol.params.tobytes()
    assert pol2.vocab == pol.vocab and pol2.descriptor() == pol.descriptor()
    assert opt2.m.tobytes() == opt.m.tobytes() and opt2.step_count == 1
    assert meta == {"note": "x"}
    save_checkpoint(tmp_path / "ck2.json", pol2, opt2, meta={"note": "x"})
    assert (tmp_path / "ck2.json").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(p)
