import numpy as np
import pytest

from causal.presets import get_preset
from estimation.bounds import IntervalEstimates, latent_grid
from estimation.ipw import EmptyStratumError, MarginalEstimates, fit_recipe_propensities, ipw_weights, recipe_from_graph
from training.model import init_classifier
from training.penalties import (
    IpwPenalty,
    LatentPenalty,
    OraclePenalty,
    Penalty,
    penalty_fio,
    penalty_latent,
    penalty_oracle,
    penalty_piu_ub,
)

from conftest import numeric_grad


def test_piu_ub_formula_gradient():
    m = MarginalEstimates(0.3, 0.8)
    value, (g0, g1) = penalty_piu_ub(m)
    assert value == pytest.approx(0.8 * 0.7 + 0.2 * 0.3)
    eps = 1e-6
    assert g0 == pytest.approx((penalty_piu_ub(MarginalEstimates(0.3 + eps, 0.8))[0]
                                - penalty_piu_ub(MarginalEstimates(0.3 - eps, 0.8))[0]) / (2 * eps))
    assert g1 == pytest.approx((penalty_piu_ub(MarginalEstimates(0.3, 0.8 + eps))[0]
                                - penalty_piu_ub(MarginalEstimates(0.3, 0.8 - eps))[0]) / (2 * eps))


def test_fio_subgradient():
    assert penalty_fio(MarginalEstimates(0.2, 0.5)) == (pytest.approx(0.3), (-1.0, 1.0))
    value, grad = penalty_fio(MarginalEstimates(0.4, 0.4))
    assert value == 0.0
    assert grad == (0.0, 0.0)


def test_latent_formula():
    iv = IntervalEstimates(l0=0.1, u0=0.3, l1=0.5, u1=0.9)
    value, grad = penalty_latent(iv)
    assert value == pytest.approx(0.9 * 0.9 + 0.5 * 0.3)
    assert grad == pytest.approx({"l0": -0.9, "u0": 0.5, "l1": -0.3, "u1": 0.9})


def test_oracle_formula():
    value, d0, d1 = penalty_oracle(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    assert value == pytest.approx(0.5)
    np.testing.assert_allclose(d0, [-0.5, -0.5])
    np.testing.assert_allclose(d1, [0.5, -0.5])


def test_base_penalty_is_zero():
    clf = init_classifier("logreg", ("A", "Q"), seed=0)
    pv = Penalty().evaluate(clf, np.arange(3), 0)
    assert pv.value == 0.0
    assert not pv.grad.any()


@pytest.fixture(scope="module")
def ipw_setup(synth_sample):
    data, sem = synth_sample
    graph = sem.graph
    pi = get_preset("synth").pi
    recipe = recipe_from_graph(graph, pi)
    w, w_prime = ipw_weights(recipe, fit_recipe_propensities(data, recipe), data.frame)
    return data, w, w_prime


@pytest.mark.parametrize("kind", ["piu-ub", "fio"])
def test_ipw_penalty_gradient(ipw_setup, kind):
    data, w, w_prime = ipw_setup
    penalty = IpwPenalty(kind, data.X, data.a, w, w_prime)
    clf = init_classifier("mlp", data.features, seed=3, hidden=(4,), X_train=data.X)
    idx = np.arange(200)
    pv = penalty.evaluate(clf, idx, 0)
    numeric = numeric_grad(lambda t: penalty.evaluate(clf.with_theta(t), idx, 0).value, clf.theta)
    np.testing.assert_allclose(pv.grad, numeric, rtol=1e-4, atol=1e-7)


def test_ipw_penalty_needs_both_strata(ipw_setup):
    data, w, w_prime = ipw_setup
    penalty = IpwPenalty("piu-ub", data.X, data.a, w, w_prime)
    clf = init_classifier("logreg", data.features, seed=0, X_train=data.X)
    only_ones = np.flatnonzero(data.a == 1)[:20]
    with pytest.raises(EmptyStratumError):
        penalty.evaluate(clf, only_ones, 0)


def test_ipw_penalty_full_value_uses_every_row(ipw_setup):
    data, w, w_prime = ipw_setup
    penalty = IpwPenalty("piu-ub", data.X, data.a, w, w_prime)
    clf = init_classifier("logreg", data.features, seed=0, X_train=data.X)
    full = penalty.full_value(clf)
    assert full.value == penalty.evaluate(clf, np.arange(len(data)), 0).value


def test_clamped_penalty_stops_gradient_outside_unit_interval(ipw_setup):
    data, w, w_prime = ipw_setup
    big = IpwPenalty("piu-ub", data.X, data.a, w * 10, w_prime * 10, clamp=True)
    clf = init_classifier("logreg", data.features, seed=0, X_train=data.X)
    clf = clf.with_theta(np.r_[np.zeros(len(data.features)), 5.0])
    pv = big.evaluate(clf, np.arange(len(data)), 0)
    assert pv.p0 == 1.0 and pv.p1 == 1.0
    assert not pv.grad.any()


def test_unknown_ipw_kind(ipw_setup):
    data, w, w_prime = ipw_setup
    with pytest.raises(ValueError):
        IpwPenalty("piu-oracle", data.X, data.a, w, w_prime)


def test_latent_penalty_gradient(latent_sample):
    data, _ = latent_sample
    penalty = LatentPenalty(latent_grid(data, data.features, "M", "R"))
    clf = init_classifier("logreg", data.features, seed=2, X_train=data.X)
    pv = penalty.evaluate(clf, None, 0)
    numeric = numeric_grad(lambda t: penalty.evaluate(clf.with_theta(t), None, 0).value, clf.theta)
    np.testing.assert_allclose(pv.grad, numeric, rtol=1e-3, atol=1e-6)
    assert penalty.full_value(clf).value == pv.value


def test_oracle_penalty_draws(synth_sample):
    data, sem = synth_sample
    pi = get_preset("synth").pi
    penalty = OraclePenalty(sem, pi, data.features, seed=5, n_pairs=300, n_full=600)
    clf = init_classifier("logreg", data.features, seed=1, X_train=data.X)
    first, again = penalty.evaluate(clf, None, 4), penalty.evaluate(clf, None, 4)
    assert first.value == again.value
    assert penalty.evaluate(clf, None, 5).value != first.value
    assert penalty.full_value(clf).value == penalty.full_value(clf).value


def test_oracle_penalty_gradient(synth_sample):
    data, sem = synth_sample
    pi = get_preset("synth").pi
    penalty = OraclePenalty(sem, pi, data.features, seed=5, n_pairs=200)
    clf = init_classifier("logreg", data.features, seed=1, X_train=data.X)
    pv = penalty.evaluate(clf, None, 0)
    numeric = numeric_grad(lambda t: penalty.evaluate(clf.with_theta(t), None, 0).value, clf.theta)
    np.testing.assert_allclose(pv.grad, numeric, rtol=1e-4, atol=1e-7)
