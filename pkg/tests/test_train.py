import numpy as np
import pandas as pd
import pytest

from causal.presets import get_preset
from estimation.bounds import piu_upper_bound
from estimation.ipw import fit_recipe_propensities, ipw_marginals, ipw_weights, recipe_from_graph
from training.model import Classifier, init_classifier
from training.penalties import IpwPenalty
from training.train import (
    TIMING_COLUMNS,
    TRACE_COLUMNS,
    TrainConfig,
    TrainingDivergedError,
    objective_and_grad,
    sgd_train,
)


@pytest.mark.parametrize("kwargs,match", [
    ({"penalty": "l1"}, "Unknown penalty kind"),
    ({"model": "forest"}, "Unknown model kind"),
    ({"lam": -1.0}, "non-negative"),
    ({"batch_size": 0}, "at least 1"),
    ({"penalty": "fio", "remove": ("A",)}, "remove-mask"),
])
def test_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        TrainConfig(**kwargs)


def test_config_dict_round_trip():
    config = TrainConfig(penalty="fio", lam=0.5, hidden=(8, 4), model="mlp", epochs=3)
    assert TrainConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ValueError, match="Unknown train config keys"):
        TrainConfig.from_dict({"learning_rate": 0.1})


def test_inactive_when_lambda_zero():
    assert not TrainConfig(penalty="piu-ub", lam=0.0).active
    assert TrainConfig(penalty="piu-ub", lam=0.1).active


@pytest.fixture(scope="module")
def penalised(synth_sample):
    data, sem = synth_sample
    recipe = recipe_from_graph(sem.graph, get_preset("synth").pi)
    props = fit_recipe_propensities(data, recipe)
    w, w_prime = ipw_weights(recipe, props, data.frame)
    return data, recipe, props, w, w_prime


def test_training_is_deterministic(synth_sample):
    data, _ = synth_sample
    config = TrainConfig(model="logreg", epochs=3, batch_size=250, seed=4)
    a = sgd_train(data.X, data.y, data.features, config)
    b = sgd_train(data.X, data.y, data.features, config)
    np.testing.assert_array_equal(a.classifier.theta, b.classifier.theta)
    assert list(a.trace.columns) == TRACE_COLUMNS
    assert a.trace["epoch"].tolist() == [1, 2, 3]
    pd.testing.assert_frame_equal(a.trace, b.trace)
    assert list(a.timing.columns) == TIMING_COLUMNS
    assert a.timing["wall_time"].is_monotonic_increasing


def test_training_lowers_the_loss(synth_sample):
    data, _ = synth_sample
    config = TrainConfig(model="logreg", epochs=30, batch_size=100, lr=0.05)
    trace = sgd_train(data.X, data.y, data.features, config).trace
    assert trace["loss"].iloc[-1] < trace["loss"].iloc[0]


def test_objective_adds_weighted_penalty(penalised):
    data, _, _, w, w_prime = penalised
    penalty = IpwPenalty("piu-ub", data.X, data.a, w, w_prime)
    config = TrainConfig(model="logreg", penalty="piu-ub", lam=2.0)
    clf = init_classifier("logreg", data.features, seed=0, X_train=data.X)
    idx = np.arange(300)
    obj = objective_and_grad(clf, data.X[idx], data.y[idx], config, penalty, idx)
    assert obj.value == pytest.approx(obj.loss + 2.0 * obj.penalty)
    unpenalised = objective_and_grad(clf, data.X[idx], data.y[idx], TrainConfig(model="logreg"), penalty, idx)
    assert unpenalised.value == unpenalised.loss
    assert np.isnan(unpenalised.p0)


def test_single_row_batches_are_skipped(penalised):
    data, _, _, w, w_prime = penalised
    n = 20
    penalty = IpwPenalty("piu-ub", data.X[:n], data.a[:n], w[:n], w_prime[:n])
    config = TrainConfig(model="logreg", penalty="piu-ub", lam=1.0, epochs=1, batch_size=1)
    result = sgd_train(data.X[:n], data.y[:n], data.features, config, penalty=penalty)
    assert result.trace["skipped_batches"].tolist() == [n]


def test_divergence_keeps_last_good_classifier(synth_sample):
    data, _ = synth_sample
    broken = Classifier(kind="logreg", theta=np.full(len(data.features) + 1, np.nan), features=data.features)
    with pytest.raises(TrainingDivergedError) as err:
        sgd_train(data.X, data.y, data.features, TrainConfig(model="logreg", epochs=2), classifier=broken)
    assert err.value.epoch == 0
    assert err.value.last_good is not None


@pytest.mark.slow
def test_penalty_reduces_the_bound(penalised):
    data, recipe, props, w, w_prime = penalised
    base = TrainConfig(model="logreg", epochs=60, batch_size=250, lr=0.05, seed=1)
    free = sgd_train(data.X, data.y, data.features, base).classifier
    penalty = IpwPenalty("piu-ub", data.X, data.a, w, w_prime)
    fair_config = TrainConfig(model="logreg", epochs=60, batch_size=250, lr=0.05, seed=1,
                              penalty="piu-ub", lam=5.0)
    fair = sgd_train(data.X, data.y, data.features, fair_config, penalty=penalty).classifier
    free_bound = piu_upper_bound(ipw_marginals(data, free, recipe, props))
    fair_bound = piu_upper_bound(ipw_marginals(data, fair, recipe, props))
    assert fair_bound < free_bound
