import numpy as np
import pandas as pd
import pytest

from estimation.ipw import fit_recipe_propensities, recipe_from_graph
from estimation.propensity import (
    PropensityConfig,
    PropensityModel,
    fit_propensity,
    load_propensity,
    predict_propensity,
    save_propensity,
)
from utils.data_utils import synth_preset


@pytest.fixture(scope="module")
def confounded():
    rng = np.random.default_rng(0)
    x = rng.normal(size=3000)
    a = (rng.random(3000) < 1 / (1 + np.exp(-2 * x))).astype(int)
    return pd.DataFrame({"x": x, "noise": rng.normal(size=3000), "a": a})


def test_propensity_tracks_covariate(confounded):
    model = fit_propensity(confounded, "a", ["x"])
    p = predict_propensity(model, pd.DataFrame({"x": [-3.0, 0.0, 3.0]}))
    assert p[0] < 0.1 < 0.4 < p[1] < 0.6 < 0.9 < p[2]


def test_predictions_are_clipped(confounded):
    model = fit_propensity(confounded, "a", ["x"], PropensityConfig(clip=0.05, degree=1))
    p = predict_propensity(model, {"x": [-100.0, 100.0]})
    np.testing.assert_allclose(p, [0.05, 0.95])


def test_empty_conditioning_is_the_marginal(confounded):
    model = fit_propensity(confounded, "a", [])
    p = predict_propensity(model, confounded.head(4))
    np.testing.assert_allclose(p, confounded["a"].mean())


@pytest.mark.parametrize("values,match", [
    ([0, 1, 2, 1], "must be binary"),
    ([1, 1, 1, 1], "single class"),
])
def test_sensitive_column_checks(values, match):
    frame = pd.DataFrame({"a": values, "x": [0.0, 1.0, 2.0, 3.0]})
    with pytest.raises(ValueError, match=match):
        fit_propensity(frame, "a", ["x"])


def test_missing_columns(confounded):
    with pytest.raises(ValueError, match="Missing sensitive column"):
        fit_propensity(confounded, "b", ["x"])
    with pytest.raises(ValueError, match="Missing conditioning"):
        fit_propensity(confounded, "a", ["z"])


@pytest.mark.parametrize("kwargs", [{"clip": 0.0}, {"clip": 0.5}, {"l2": 0.0}, {"degree": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PropensityConfig(**kwargs)


def test_artifact_round_trip(confounded, tmp_path):
    model = fit_propensity(confounded, "a", ["x", "noise"])
    save_propensity(model, tmp_path / "p" / "c.json")
    loaded = load_propensity(tmp_path / "p" / "c.json")
    assert loaded.columns == ("x", "noise")
    np.testing.assert_allclose(predict_propensity(loaded, confounded), predict_propensity(model, confounded))


def test_artifact_format_checked():
    with pytest.raises(ValueError, match="Not a version-2 propensity artifact"):
        PropensityModel.from_dict({"format": "something-else", "version": 1})


def test_quadratic_terms_capture_an_interaction():
    rng = np.random.default_rng(3)
    x, z = rng.normal(size=(2, 6000))
    a = (rng.random(6000) < 1 / (1 + np.exp(-2 * x * z))).astype(int)
    frame = pd.DataFrame({"x": x, "z": z, "a": a})
    grid = pd.DataFrame({"x": [1.5, 1.5], "z": [1.5, -1.5]})

    linear = predict_propensity(fit_propensity(frame, "a", ["x", "z"], PropensityConfig(degree=1)), grid)
    assert np.all(np.abs(linear - 0.5) < 0.2)

    model = fit_propensity(frame, "a", ["x", "z"])
    assert model.degree == 2
    quadratic = predict_propensity(model, grid)
    assert quadratic[0] > 0.9
    assert quadratic[1] < 0.1


def test_quadratic_artifact_round_trip(confounded, tmp_path):
    model = fit_propensity(confounded, "a", ["x", "noise"], PropensityConfig(degree=2))
    save_propensity(model, tmp_path / "full.json")
    loaded = load_propensity(tmp_path / "full.json")
    assert loaded.degree == 2
    assert len(loaded.coef) == 5
    np.testing.assert_allclose(predict_propensity(loaded, confounded), predict_propensity(model, confounded))


@pytest.mark.slow
def test_propensities_are_calibrated_at_scale(hiring_pi):
    data, sem = synth_preset("synth", 50_000, seed=5)
    props = fit_recipe_propensities(data, recipe_from_graph(sem.graph, hiring_pi))

    # A is independent of Q in the generating model
    p_c = predict_propensity(props.c, {"Q": np.arange(-5.0, 10.0)})
    np.testing.assert_allclose(p_c, 0.6, atol=0.03)

    p_full = predict_propensity(props.full, data.frame)
    deciles = pd.qcut(p_full, 10, labels=False, duplicates="drop")
    table = pd.DataFrame({"p": p_full, "a": data.a, "bin": deciles}).groupby("bin").mean()
    assert (table["p"] - table["a"]).abs().mean() <= 0.03
