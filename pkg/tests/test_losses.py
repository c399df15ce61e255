import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aiol.augment import AugmentationPolicy, rand_transform, weak_augment
from aiol.errors import InvalidArgument, TrainingDiverged
from aiol.losses import (LossWeights, consistency_loss, consistency_term, entropy_max_loss,
                         entropy_max_term, entropy_min_loss, entropy_min_term, mixed_batch,
                         stage_schedule, supervised_loss, supervised_term, total_loss)
from aiol.nn import (ParameterSet, compute_gradients, forward, softmax_with_temperature,
                     xent_with_logits)
from helpers import finite_diff, random_params, rel_err


def _probs(params, X, T=1.0):
    return np.array([softmax_with_temperature(z, T) for z in forward(params, X)])


def _linear(W):
    W = np.asarray(W, dtype=float)
    return ParameterSet([W], [np.zeros(W.shape[1])])


# ---------------------------------------------------------------- supervised


def test_supervised_saturated_is_zero():
    params = _linear([[100.0, -100.0], [-100.0, 100.0]])
    assert supervised_loss(params, np.eye(2), [0, 1]) <= 1e-6


def test_supervised_single_sample_is_neg_log_p():
    params = _linear([[1.2, -0.3, 0.4]])
    p = _probs(params, [[1.0]])[0, 2]
    assert supervised_loss(params, [[1.0]], [2]) == pytest.approx(-math.log(p), abs=1e-14)


def test_supervised_batch_mean(rng):
    params = random_params(rng, (2, 5, 3))
    X = rng.normal(size=(2, 2))
    y = [0, 2]
    per = [supervised_loss(params, X[i:i + 1], y[i:i + 1]) for i in range(2)]
    assert supervised_loss(params, X, y) == pytest.approx(np.mean(per), abs=1e-12)


def test_supervised_empty_batch():
    with pytest.raises(InvalidArgument):
        supervised_loss(_linear([[1.0, 0.0]]), np.zeros((0, 1)), [])


# ---------------------------------------------------------------- consistency


def test_consistency_without_augmentation_is_entropy(rng):
    params = random_params(rng, (2, 6, 3))
    X = rng.normal(size=(8, 2))
    pol = AugmentationPolicy(weak_sigma=0.0, magnitude=0.0)
    p = _probs(params, X)
    H = -(p * np.log(p)).sum(1).mean()
    assert consistency_loss(params, X, 1.0, pol, rng) == pytest.approx(H, abs=1e-12)


def test_consistency_huge_temperature_targets_uniform(rng):
    params = random_params(rng, (2, 6, 4))
    X = rng.normal(size=(8, 2))
    pol = AugmentationPolicy(weak_sigma=0.0, magnitude=0.0)
    ce_uniform = -np.log(_probs(params, X)).mean(1).mean()
    assert consistency_loss(params, X, 1e6, pol, rng) == pytest.approx(ce_uniform, abs=1e-4)


def test_consistency_matches_straight_line_oracle(rng):
    params = random_params(rng, (2, 8, 3))
    X = rng.normal(size=(16, 2))
    pol = AugmentationPolicy(weak_sigma=0.1, magnitude=0.5)
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    val = consistency_loss(params, X, 1.7, pol, r1)
    xw = weak_augment(X, r2, 0.1)
    xs = rand_transform(X, pol, r2)
    t, q = _probs(params, xw, 1.7), _probs(params, xs)
    assert val == pytest.approx(-(t * np.log(q)).sum(1).mean(), abs=1e-10)


def test_consistency_empty_batch(rng):
    with pytest.raises(InvalidArgument):
        consistency_loss(_linear([[1.0, 0.0]]), np.zeros((0, 1)), 1.0, AugmentationPolicy(), rng)


# ---------------------------------------------------------------- entropy terms


def test_entropy_terms_empty_selection_is_zero(rng):
    params = random_params(rng, (2, 4, 2))
    X = rng.normal(size=(10, 2))
    none = np.zeros(10, bool)
    assert entropy_min_loss(params, X, none, 0.8, None, rng) == 0.0
    assert entropy_max_loss(params, X, none, 0.8, None, rng) == 0.0


def test_entropy_min_single_sample_over_64():
    params = _linear([[0.8, -0.5, 0.1]])
    x = np.array([[1.0]])
    x_mixed = np.array([[0.6]])
    p = _probs(params, x_mixed)[0, 0]
    val = entropy_min_term(None, params, x, x_mixed, 64, 0.0)
    assert val == pytest.approx(-math.log(p) / 64, abs=1e-15)


def test_entropy_max_uniform_output():
    params = ParameterSet([np.zeros((2, 4))], [np.zeros(4)])
    val = entropy_max_term(None, params, np.ones((1, 2)), 64, 0.0)
    assert val == pytest.approx(-math.log(4) / 64, abs=1e-15)
    assert round(val, 5) == -0.02166


def test_entropy_terms_match_recomputation(rng):
    params = random_params(rng, (2, 8, 3))
    X = rng.normal(size=(32, 2))
    sel = rng.random(32) < 0.4
    rows = np.flatnonzero(sel)
    pol = AugmentationPolicy(magnitude=0.3)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    vmin = entropy_min_loss(params, X, sel, 0.75, pol, r1)
    xm = mixed_batch(X, rows, 0.75, pol, r2)
    yhat = forward(params, X[rows]).argmax(1)
    q = _probs(params, xm)
    assert vmin == pytest.approx(-np.log(q[np.arange(rows.size), yhat]).sum() / 32, abs=1e-10)

    r1, r2 = np.random.default_rng(10), np.random.default_rng(10)
    vmax = entropy_max_loss(params, X, sel, 0.75, pol, r1)
    q = _probs(params, mixed_batch(X, rows, 0.75, pol, r2))
    assert vmax == pytest.approx((q * np.log(q)).sum() / 32, abs=1e-10)


@given(st.integers(0, 10_000))
def test_entropy_term_signs_and_bounds(seed):
    r = np.random.default_rng(seed)
    K = int(r.integers(2, 6))
    params = random_params(r, (2, 5, K), scale=3.0)
    X = r.normal(size=(20, 2))
    sel = r.random(20) < 0.5
    assert entropy_min_loss(params, X, sel, 0.9, None, r) >= 0
    v = entropy_max_loss(params, X, sel, 0.9, None, r)
    assert -math.log(K) * sel.sum() / 20 - 1e-12 <= v <= 0


def test_doubling_batch_halves_selection_losses(rng):
    params = random_params(rng, (2, 6, 3))
    xo, xm = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    a = entropy_min_term(None, params, xo, xm, 32, 0.0)
    b = entropy_min_term(None, params, xo, xm, 64, 0.0)
    assert b == pytest.approx(a / 2, abs=1e-15)
    a = entropy_max_term(None, params, xm, 32, 0.0)
    b = entropy_max_term(None, params, xm, 64, 0.0)
    assert b == pytest.approx(a / 2, abs=1e-15)


# ---------------------------------------------------------------- gradients


def _grad(params, fn):
    return compute_gradients(params, fn)[1].arrays()


def test_term_gradients_match_finite_differences(rng):
    params = random_params(rng, (2, 7, 3), slope=0.1)
    XL, yL = rng.normal(size=(4, 2)), np.array([0, 1, 2, 1])
    xw, xs = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    xo, xm = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    target = _probs(params, xw, 1.3)
    yhat = forward(params, xo).argmax(1)
    cases = [
        (lambda t: supervised_term(t, params, XL, yL),
         lambda p: supervised_term(None, p, XL, yL, 0.0)),
        # the target is frozen at the base parameters on both sides
        (lambda t: consistency_term(t, params, xw, xs, 1.3),
         lambda p: -(target * np.log(_probs(p, xs))).sum(1).mean()),
        (lambda t: entropy_min_term(t, params, xo, xm, 10, pseudo_labels=yhat),
         lambda p: entropy_min_term(None, p, xo, xm, 10, 0.0, yhat)),
        (lambda t: entropy_max_term(t, params, xm, 10),
         lambda p: entropy_max_term(None, p, xm, 10, 0.0)),
    ]
    for analytic, value in cases:
        for a, b in zip(_grad(params, analytic), finite_diff(params, value)):
            assert rel_err(a, b).max() < 1e-4


def test_consistency_target_carries_no_gradient(rng):
    params = random_params(rng, (2, 5, 3))
    xw, xs = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    g1 = _grad(params, lambda t: consistency_term(t, params, xw, xs, 1.0))
    target = _probs(params, xw)
    for a, b in zip(g1, _grad(params, lambda t: _ce_const_target(t, target, xs))):
        np.testing.assert_allclose(a, b, atol=1e-14)


def _ce_const_target(tape, target, xs):
    out = tape.forward(xs)
    v, g = xent_with_logits(out.logits, target)
    out.backward(g / len(xs))
    return float(v.mean())


def test_pseudo_label_path_does_not_affect_gradient(rng):
    params = random_params(rng, (2, 5, 3))
    xo, xm = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    yhat = forward(params, xo).argmax(1)
    a = _grad(params, lambda t: entropy_min_term(t, params, xo, xm, 8))
    # perturbing the pseudo-label inputs without changing the argmax leaves gradients identical
    b = _grad(params, lambda t: entropy_min_term(t, params, xo + 1e-9, xm, 8))
    c = _grad(params, lambda t: entropy_min_term(t, params, xo, xm, 8, pseudo_labels=yhat))
    for x, y, z in zip(a, b, c):
        assert np.array_equal(x, y) and np.array_equal(x, z)


def test_total_gradient_is_weighted_sum(rng):
    params = random_params(rng, (2, 6, 3))
    XL, yL = rng.normal(size=(4, 2)), np.array([0, 1, 2, 0])
    xw, xs = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    xo, xm = rng.normal(size=(3, 2)), rng.normal(size=(5, 2))
    w = LossWeights(0.7, 1.3, 0.4)

    def total(t):
        parts = (supervised_term(t, params, XL, yL, 1.0),
                 consistency_term(t, params, xw, xs, 1.5, w.omega),
                 entropy_min_term(t, params, xo, xm[:3], 8, w.beta),
                 entropy_max_term(t, params, xm[3:], 8, w.gamma))
        return total_loss(w, *parts)

    parts = [_grad(params, lambda t: supervised_term(t, params, XL, yL)),
             _grad(params, lambda t: consistency_term(t, params, xw, xs, 1.5)),
             _grad(params, lambda t: entropy_min_term(t, params, xo, xm[:3], 8)),
             _grad(params, lambda t: entropy_max_term(t, params, xm[3:], 8))]
    coef = (1.0, w.omega, w.beta, w.gamma)
    for k, g in enumerate(_grad(params, total)):
        expect = sum(c * p[k] for c, p in zip(coef, parts))
        np.testing.assert_allclose(g, expect, rtol=0, atol=1e-10)


def test_zero_weight_records_nothing(rng):
    params = random_params(rng, (2, 4, 2))
    xw, xs = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    g = _grad(params, lambda t: consistency_term(t, params, xw, xs, 1.0, 0.0))
    assert all(not a.any() for a in g)


# ---------------------------------------------------------------- schedule / total


@pytest.mark.parametrize("epoch,epochs,expect", [
    (205, 256, (0, 1, 1)), (204, 256, (1, 0, 0)), (1, 256, (1, 0, 0)),
    (9, 10, (0, 1, 1)), (8, 10, (1, 0, 0)), (48, 60, (1, 0, 0)), (49, 60, (0, 1, 1)),
])
def test_stage_schedule(epoch, epochs, expect):
    w = stage_schedule(epoch, epochs)
    assert (w.omega, w.beta, w.gamma) == expect


def test_stage_schedule_range():
    with pytest.raises(InvalidArgument):
        stage_schedule(0, 10)
    with pytest.raises(InvalidArgument):
        stage_schedule(11, 10)


def test_total_loss_examples():
    assert total_loss(LossWeights(0, 0, 0), 0.8, 5.0, 3.0, -1.0) == 0.8
    assert total_loss(LossWeights(1, 0, 0), 1.0, 0.5, 3.0, -1.0) == 1.5
    with pytest.raises(TrainingDiverged):
        total_loss(LossWeights(1, 0, 0), float("nan"), 0.0, 0.0, 0.0)


@given(st.lists(st.floats(-100, 100), min_size=7, max_size=7))
def test_total_loss_is_weighted_sum(v):
    w = LossWeights(abs(v[0]), abs(v[1]), abs(v[2]))
    ls, lcr, lmin, lmax = v[3:]
    assert total_loss(w, ls, lcr, lmin, lmax) == pytest.approx(
        ls + w.omega * lcr + w.beta * lmin + w.gamma * lmax, abs=1e-15, rel=1e-15)
