import math

import numpy as np
import pytest

from plmdecode import lm
from plmdecode.alphabet import build_alphabet, extend_alphabet
from plmdecode.data_io import Checkpoint, checkpoint_to_bytes
from plmdecode.errors import ConfigError, NumericFailure
from plmdecode.lm import (LMState, TrainConfig, forward_step, grad_check, grad_check_blocks,
                          init_params, masked_log_probs, masked_log_softmax, param_count,
                          perplexity, utterance_grads, utterance_nll, zero_params, zero_state)


def random_params(seed, V=5, d=4, h=4, scale=0.5):
    rng = np.random.default_rng(seed)
    p = init_params(V, d, h, rng)
    for arr in p.arrays().values():
        arr[...] = rng.normal(0, scale, arr.shape)
    return p


def scalar_reference_step(p, h_prev, c_prev, x):
    """Plain-loop LSTM step used as an independent oracle."""
    H = p.hidden_dim
    inp = list(p.emb[:, x]) + list(h_prev)
    z = []
    for r in range(4 * H):
        acc = p.b[r]
        for k, v in enumerate(inp):
            acc += p.W[r, k] * v
        z.append(acc)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    i = [sig(v) for v in z[:H]]
    f = [sig(v) for v in z[H:2 * H]]
    o = [sig(v) for v in z[2 * H:3 * H]]
    g = [math.tanh(v) for v in z[3 * H:]]
    c = [f[k] * c_prev[k] + i[k] * g[k] for k in range(H)]
    h = [o[k] * math.tanh(c[k]) for k in range(H)]
    logits = []
    for r in range(p.vocab_size):
        acc = p.b_out[r]
        for k in range(H):
            acc += p.W_out[r, k] * h[k]
        logits.append(acc)
    return np.array(logits), np.array(h), np.array(c)


# ---------------------------------------------------------------- forward step

def test_zero_weights_return_output_bias():
    p = zero_params(5, 3, 4)
    v = np.arange(5.0)
    p.b_out[:] = v
    state = LMState(np.ones(4), np.ones(4))
    for x in range(5):
        logits, _ = forward_step(p, state, x)
        assert np.array_equal(logits, v)


def test_gate_saturation_gives_zero_hidden():
    p = zero_params(4, 2, 3)
    h = 3
    p.b[:h] = 1e3          # input gate open
    p.b[h:2 * h] = -1e3    # forget gate shut
    p.b[2 * h:3 * h] = 1e3
    p.b_out[:] = [0.5, -1.0, 2.0, 0.0]
    logits, s = forward_step(p, LMState(np.full(3, 0.7), np.full(3, 0.3)), 1)
    assert np.allclose(s.h, 0.0)
    assert np.allclose(logits, p.b_out)


def test_forward_matches_scalar_loop():
    p = random_params(0, V=5, d=4, h=4)
    logits, s = forward_step(p, zero_state(p), 2)
    ref_l, ref_h, ref_c = scalar_reference_step(p, [0.0] * 4, [0.0] * 4, 2)
    assert np.allclose(logits, ref_l, atol=1e-12, rtol=0)
    # second step from a non-zero state
    logits2, _ = forward_step(p, s, 4)
    ref_l2, _, _ = scalar_reference_step(p, ref_h, ref_c, 4)
    assert np.allclose(logits2, ref_l2, atol=1e-12, rtol=0)


def test_forward_rejects_bad_symbol_and_nonfinite():
    p = random_params(1)
    with pytest.raises(IndexError):
        forward_step(p, zero_state(p), 99)
    p.W_out[0, 0] = np.inf
    with pytest.raises(NumericFailure) as e:
        forward_step(p, zero_state(p), 0)
    assert e.value.block == "W_out"


# ---------------------------------------------------------------- masked softmax

def test_masked_softmax_examples():
    assert np.allclose(masked_log_softmax(np.zeros(6), np.array([1, 1, 0, 1, 1, 0], bool)),
                       np.log(0.25))
    assert masked_log_softmax(np.array([3.0, -2.0]), np.array([False, True])) == [0.0]
    got = masked_log_softmax(np.array([1.0, 2, 3, 4]), np.array([True, False, True, False]))
    lse = math.log(math.exp(1) + math.exp(3))
    assert np.allclose(got, [1 - lse, 3 - lse], atol=1e-15)
    full = masked_log_probs(np.array([1.0, 2, 3, 4]), np.array([True, False, True, False]))
    assert full[1] == -np.inf and full[3] == -np.inf
    with pytest.raises(ConfigError):
        masked_log_softmax(np.zeros(3), np.zeros(3, bool))


def test_masked_softmax_extreme_logits():
    z = np.array([1000.0, -1000.0, 999.0])
    lp = masked_log_softmax(z, np.ones(3, bool))
    assert np.isfinite(lp[[0, 2]]).all()
    assert abs(np.exp(lp).sum() - 1) < 1e-12


# ---------------------------------------------------------------- nll / perplexity

@pytest.fixture
def alpha3():
    return build_alphabet({"x": {"a", "b", "c"}, "y": {"b", "d"}})


def test_uniform_model_nll_and_ppl(alpha3):
    a = alpha3
    p = zero_params(len(a), 3, 4)
    m = a.mask("x")
    k = int(m.sum())
    sos = a.sos_id("x")
    seq = [sos, 0, 1, a.space_id("x"), 2, sos]
    total, count = utterance_nll(p, seq, m)
    assert total == pytest.approx(5 * math.log(k), abs=1e-12)
    assert count == 4
    assert perplexity(p, [seq, [sos, 2, sos]], m) == pytest.approx(k, abs=1e-12)


def test_counting_rule(alpha3):
    a = alpha3
    p = zero_params(len(a), 2, 2)
    sos = a.sos_id("x")
    total, count = utterance_nll(p, [sos, 0, sos], a.mask("x"))
    assert count == 1
    assert total == pytest.approx(2 * math.log(5))


def test_out_of_mask_target_rejected(alpha3):
    a = alpha3
    p = zero_params(len(a), 2, 2)
    sos = a.sos_id("x")
    with pytest.raises(ConfigError):
        utterance_nll(p, [sos, a.phoneme_id("d"), sos], a.mask("x"))


def test_truncation_windows_do_not_change_nll(alpha3):
    a = alpha3
    p = random_params(3, V=len(a), d=3, h=5)
    m = a.mask("x")
    sos = a.sos_id("x")
    rng = np.random.default_rng(0)
    seq = [sos] + [int(v) for v in rng.choice([0, 1, 2, a.space_id("x")], 23)] + [sos]
    full, _ = utterance_nll(p, seq, m)
    for w in (2, 3, 7, 24, 100):
        part, _ = utterance_nll(p, seq, m, window=w)
        assert abs(part - full) < 1e-10


# ---------------------------------------------------------------- gradients

def test_grad_check_zero_model(alpha3):
    a = alpha3
    p = zero_params(len(a), 3, 3)
    sos = a.sos_id("x")
    assert grad_check(p, [sos, 0, 1, 2, sos], a.mask("x")) < 1e-6


def test_grad_check_random_small_model():
    a = build_alphabet({"x": {"a", "b", "c", "d"}})
    p = random_params(7, V=len(a), d=4, h=4)
    sos = a.sos_id("x")
    seq = [sos, 0, 3, a.space_id("x"), 1, sos]        # T = 5 targets
    errs = grad_check_blocks(p, seq, a.mask("x"))
    assert set(errs) == set(lm.BLOCK_NAMES)
    assert max(errs.values()) < 1e-4


def test_masked_rows_have_zero_gradient(alpha3):
    a = alpha3
    p = random_params(2, V=len(a), d=3, h=4)
    m = a.mask("x")
    sos = a.sos_id("x")
    _, g = utterance_grads(p, [sos, 0, 2, a.space_id("x"), 1, sos], m)
    out = ~m
    assert np.all(g["W_out"][out] == 0.0)
    assert np.all(g["b_out"][out] == 0.0)
    # embedding columns of symbols never fed as input
    never = [i for i in range(len(a)) if i not in (sos, 0, 1, 2, a.space_id("x"))]
    assert np.all(g["emb"][:, never] == 0.0)


def test_training_never_moves_unused_embeddings():
    a = build_alphabet({"x": {"a", "b"}, "y": {"c", "d"}})
    sos = a.sos_id("x")
    corpus = [("x", [sos, 0, 1, a.space_id("x"), 0, sos])] * 4
    init = init_params(len(a), 3, 4, np.random.default_rng(0), a.hash)
    p = lm.train(corpus, a, TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=3, lr=1e-2),
                 init=init)
    untouched = [a.phoneme_id("c"), a.phoneme_id("d"), a.space_id("y"), a.sos_id("y"),
                 a.space_id("x")]
    outside = np.flatnonzero(~a.mask("x"))
    assert np.array_equal(p.emb[:, untouched[:-1]], init.emb[:, untouched[:-1]])
    assert np.array_equal(p.W_out[outside], init.W_out[outside])
    assert np.array_equal(p.b_out[outside], init.b_out[outside])
    # <space>_x is an input symbol, so it does move
    assert not np.array_equal(p.emb[:, a.space_id("x")], init.emb[:, a.space_id("x")])


# ---------------------------------------------------------------- training

def tiny_corpus(a, lang="x"):
    sos, sp = a.sos_id(lang), a.space_id(lang)
    return [(lang, [sos, 0, 1, sp, 2, sos]), (lang, [sos, 2, 2, sp, 0, 1, sos])]


def test_zero_epochs_returns_init(alpha3):
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=0, seed=5)
    p = lm.train(tiny_corpus(alpha3), alpha3, cfg)
    ref = init_params(len(alpha3), 3, 4, np.random.default_rng(5), alpha3.hash)
    for k, arr in p.arrays().items():
        assert np.array_equal(arr, ref.arrays()[k])


def test_same_seed_bitwise_identical(alpha3):
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=3, dropout=0.3, batch_size=2, seed=9)
    blobs = [checkpoint_to_bytes(Checkpoint(alpha3, lm.train(tiny_corpus(alpha3), alpha3, cfg),
                                            cfg.to_dict(), cfg.seed))
             for _ in range(2)]
    assert blobs[0] == blobs[1]
    other = lm.train(tiny_corpus(alpha3), alpha3, TrainConfig(embed_dim=3, hidden_dim=4,
                                                              max_epochs=3, dropout=0.3,
                                                              batch_size=2, seed=10))
    assert checkpoint_to_bytes(Checkpoint(alpha3, other, cfg.to_dict(), 10)) != blobs[0]


def test_overfit_single_sentence_and_regenerate():
    a = build_alphabet({"x": {"a", "b", "c", "d"}})
    sos, sp = a.sos_id("x"), a.space_id("x")
    seq = [sos, 0, 1, 2, sp, 3, 0, sp, 1, sos]
    cfg = TrainConfig(embed_dim=8, hidden_dim=16, lr=1e-2, max_epochs=300, seed=0)
    p = lm.train([("x", seq)], a, cfg)
    total, _ = utterance_nll(p, seq, a.mask("x"))
    assert total / (len(seq) - 1) < 0.05
    assert lm.sample(p, a, "x", temperature=0.0) == seq[1:-1]


def test_deterministic_bigram_language_reaches_ppl_one():
    # each symbol determines its successor: a b c <space> a b c ...
    a = build_alphabet({"x": {"a", "b", "c"}})
    sos, sp = a.sos_id("x"), a.space_id("x")
    corpus = []
    for n in (1, 1, 1, 1):
        corpus.append(("x", [sos] + [0, 1, 2]  + [sos]))
    cfg = TrainConfig(embed_dim=6, hidden_dim=12, lr=1e-2, max_epochs=150, seed=1)
    p = lm.train(corpus, a, cfg)
    ppl = perplexity(p, [s for _, s in corpus], a.mask("x"))
    assert 1.0 <= ppl < 1.02


def test_early_stopping_returns_best_epoch(alpha3):
    hist = []
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=20, lr=5e-2, patience=2, seed=0)
    corpus = tiny_corpus(alpha3)
    dev = [("x", [alpha3.sos_id("x"), 1, 0, 0, alpha3.sos_id("x")])]
    p = lm.train(corpus, alpha3, cfg, heldout=dev, on_epoch=hist.append)
    dev_nll = [r["dev_nll"] for r in hist]
    nll, n = lm.corpus_nll(p, dev, alpha3.masks)
    assert nll / n == pytest.approx(min(dev_nll), abs=1e-12)
    assert len(hist) < 20 or dev_nll.index(min(dev_nll)) >= 20 - cfg.patience


def test_max_steps_limit(alpha3):
    hist = []
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=50, max_steps=5, seed=0)
    lm.train(tiny_corpus(alpha3) * 2, alpha3, cfg, on_epoch=hist.append)
    assert hist[-1]["steps"] == 5


def test_sgd_optimizer_reduces_loss(alpha3):
    corpus = tiny_corpus(alpha3)
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, optimizer="sgd", lr=0.5, max_epochs=30, seed=0)
    p0 = init_params(len(alpha3), 3, 4, np.random.default_rng(0), alpha3.hash)
    p = lm.train(corpus, alpha3, cfg)
    before = lm.corpus_nll(p0, corpus, alpha3.masks)[0]
    after = lm.corpus_nll(p, corpus, alpha3.masks)[0]
    assert after < before


def test_divergence_raises_numeric_failure(alpha3):
    init = init_params(len(alpha3), 3, 4, np.random.default_rng(0), alpha3.hash)
    init.W[0, 0] = np.nan
    with pytest.raises(NumericFailure) as e:
        lm.train(tiny_corpus(alpha3), alpha3, TrainConfig(embed_dim=3, hidden_dim=4), init=init)
    assert e.value.block in lm.BLOCK_NAMES


def test_corpus_validation(alpha3):
    with pytest.raises(ConfigError):
        lm.train([], alpha3, TrainConfig())
    bad = [("x", [alpha3.sos_id("x"), alpha3.phoneme_id("d"), alpha3.sos_id("x")])]
    with pytest.raises(ConfigError):
        lm.train(bad, alpha3, TrainConfig(embed_dim=2, hidden_dim=2))
    with pytest.raises(ConfigError):
        lm.train([("zz", [0, 0])], alpha3, TrainConfig(embed_dim=2, hidden_dim=2))


@pytest.mark.parametrize("kw", [dict(dropout=1.0), dict(dropout=-0.1), dict(clip_norm=0),
                                dict(truncation=1), dict(batch_size=0), dict(optimizer="rmsprop")])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_presets():
    s, l = lm.plm_small(), lm.plm_large()
    assert (s.embed_dim, s.hidden_dim, s.dropout) == (64, 256, 0.0)
    assert (l.embed_dim, l.hidden_dim, l.dropout) == (64, 1024, 0.4)
    assert lm.plm_small(seed=3).seed == 3


# ---------------------------------------------------------------- parameter counting

def test_param_count_closed_form():
    assert param_count(3, 2, 2) == 55
    assert lm.count_params(zero_params(3, 2, 2)) == 55
    # PLM-Large scale with a ~60 symbol alphabet is about 4.5M
    assert 4.4e6 < param_count(60, 64, 1024) < 4.6e6
    ratio = param_count(7, 2, 2) / param_count(3, 2, 2)
    assert ratio == (2 * 7 + 40 + 2 * 7 + 7) / 55


# ---------------------------------------------------------------- adaptation

def test_grow_params_shapes_and_preserves_old_predictions():
    a = build_alphabet({"x": {"a", "b", "c"}})
    e = extend_alphabet(a, "y", {"c", "d", "e"})
    assert len(e) == len(a) + 4
    p = random_params(4, V=len(a), d=3, h=5)
    p.alphabet_hash = a.hash
    g = lm.grow_params(p, len(e), np.random.default_rng(0), e.hash)
    assert g.vocab_size == len(e)
    old = a.mask("x")
    new = e.mask("x")
    s_old, s_new = zero_state(p), zero_state(g)
    for x in [a.sos_id("x"), 0, 2, a.space_id("x"), 1]:
        l_old, s_old = forward_step(p, s_old, x)
        l_new, s_new = forward_step(g, s_new, x)
        assert np.array_equal(masked_log_softmax(l_old, old), masked_log_softmax(l_new, new))


def test_adapt_without_new_phonemes_keeps_embedding_width():
    a = build_alphabet({"x": {"a", "b", "c"}})
    e = extend_alphabet(a, "y", {"a", "b"})
    cfg = TrainConfig(embed_dim=3, hidden_dim=4, max_epochs=2, seed=0)
    p = lm.train(tiny_corpus(a), a, cfg)
    sos, sp = e.sos_id("y"), e.space_id("y")
    q = lm.adapt(p, a, e, [("y", [sos, 0, sp, 1, sos])], cfg)
    assert q.emb.shape == (3, len(a) + 2)
    assert q.W.shape == p.W.shape
    assert not np.array_equal(q.W, p.W)
    assert q.alphabet_hash == e.hash


def test_adapt_checks_alphabets():
    a = build_alphabet({"x": {"a", "b"}})
    b = build_alphabet({"x": {"a", "c"}})
    p = zero_params(len(a), 2, 2, a.hash)
    with pytest.raises(ConfigError):
        lm.adapt(p, b, extend_alphabet(b, "y", {"a"}), [], TrainConfig())
    with pytest.raises(ConfigError):
        lm.adapt(p, a, extend_alphabet(b, "y", {"a"}), [], TrainConfig())


# ---------------------------------------------------------------- sampling

def test_sample_greedy_and_seeded():
    a = build_alphabet({"x": {"a", "b", "c"}})
    p = random_params(11, V=len(a), d=3, h=4)
    m = a.mask("x")
    sos = a.sos_id("x")
    # manual argmax rollout
    s, x, ref = zero_state(p), sos, []
    for _ in range(30):
        logits, s = forward_step(p, s, x)
        idx = np.flatnonzero(m)
        x = int(idx[np.argmax(logits[idx])])
        if x == sos:
            break
        ref.append(x)
    assert lm.sample(p, a, "x", max_len=30, temperature=0.0) == ref
    s1 = lm.sample(p, a, "x", seed=4)
    assert s1 == lm.sample(p, a, "x", seed=4)
    assert all(m[v] and v != sos for v in s1)
    assert len(lm.sample(p, a, "x", max_len=3, seed=1)) <= 3
