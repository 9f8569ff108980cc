import numpy as np
import pandas as pd
import pytest

from causal.graph import GraphValidationError, PathwaySet, RecantingWitnessError, enumerate_paths
from causal.presets import PRESETS, get_preset
from causal.sem import (
    Grouping,
    NoiseSpec,
    Sem,
    SemError,
    StructuralEquation,
    evaluate_world,
    intervene,
    oracle_conditional_mean_std,
    oracle_piu,
    path_specific_worlds,
    sample_noise,
    sample_observational,
    sem_from_dict,
    sem_to_dict,
)

from conftest import constant_classifier, linear_classifier


@pytest.fixture(scope="module")
def synth():
    return get_preset("synth")


def chain_sem(graph):
    return Sem(
        graph=graph,
        equations={
            "A": StructuralEquation.of("A", (), "U"),
            "M1": StructuralEquation.of("M1", ("A",), "A + U"),
            "M2": StructuralEquation.of("M2", ("M1",), "M1 + U"),
        },
        noise={"A": NoiseSpec.bernoulli(0.5), "M1": NoiseSpec.gaussian(0, 1), "M2": NoiseSpec.gaussian(0, 1)},
    )


@pytest.mark.parametrize("factory,args", [
    (NoiseSpec.bernoulli, (1.5,)),
    (NoiseSpec.gaussian, (0, 0)),
    (NoiseSpec.truncated_gaussian, (0, 1, 2, 1)),
    (NoiseSpec.uniform, (1, 0)),
])
def test_invalid_noise(factory, args):
    with pytest.raises(SemError):
        factory(*args)


def test_truncated_noise_stays_in_bounds():
    draws = NoiseSpec.truncated_gaussian(3, 2, 0.1, 3.0).sample(np.random.default_rng(0), 5000)
    assert draws.min() >= 0.1 and draws.max() <= 3.0


def test_equation_must_use_declared_parents():
    with pytest.raises(SemError, match="not among its parents"):
        StructuralEquation.of("D", ("A",), "A + Q")


def test_sem_needs_every_equation(hiring, synth):
    equations = dict(synth.sem.equations)
    del equations["M"]
    with pytest.raises(SemError, match="missing \\['M'\\]"):
        Sem(graph=hiring, equations=equations, noise=synth.sem.noise)


def test_bernoulli_needs_uniform_noise(hiring, synth):
    equations = {**synth.sem.equations, "D": StructuralEquation.of("D", ("A",), "bernoulli(0.5)")}
    with pytest.raises(SemError, match="not uniform"):
        Sem(graph=hiring, equations=equations, noise=synth.sem.noise)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_sample_deterministically(name):
    preset = get_preset(name)
    first = sample_observational(preset.sem, preset.outcome, 300, seed=3)
    second = sample_observational(preset.sem, preset.outcome, 300, seed=3)
    pd.testing.assert_frame_equal(first, second)
    assert list(first.columns) == [*preset.sem.graph.features, "Y"]
    assert set(first["Y"].unique()) <= {0, 1}


def test_latent_column_is_dropped():
    preset = get_preset("synth-latent")
    frame = sample_observational(preset.sem, preset.outcome, 50, seed=0)
    assert "H" not in frame.columns


def test_unknown_preset():
    with pytest.raises(ValueError, match="Unknown preset"):
        get_preset("nope")


def test_noise_streams_are_per_node(synth):
    a = sample_noise(synth.sem, 100, seed=5)
    b = sample_noise(synth.sem, 100, seed=5, chunk=1)
    again = sample_noise(synth.sem, 100, seed=5)
    np.testing.assert_array_equal(a["Q"], again["Q"])
    assert not np.array_equal(a["Q"], b["Q"])


def test_intervention_fixes_sensitive_node(synth):
    noise = sample_noise(synth.sem, 200, seed=1)
    world = evaluate_world(intervene(synth.sem, 1), noise)
    np.testing.assert_array_equal(world["A"], np.ones(200))
    np.testing.assert_array_equal(world["M"], 3 + 0.4 * world["Q"] * noise["M"])


def test_path_specific_inputs(synth):
    noise = sample_noise(synth.sem, 500, seed=2)
    worlds = path_specific_worlds(synth.sem, synth.pi, noise)
    col = {f: i for i, f in enumerate(worlds.features)}
    np.testing.assert_array_equal(worlds.x0[:, col["A"]], 0)
    np.testing.assert_array_equal(worlds.x1pi[:, col["A"]], 1)
    # D sits on A→D→Y and takes its A=1 value; M only reaches Y off π
    np.testing.assert_array_equal(worlds.x1pi[:, col["D"]], worlds.world1["D"])
    np.testing.assert_array_equal(worlds.x1pi[:, col["M"]], worlds.world0["M"])
    np.testing.assert_array_equal(worlds.x1pi[:, col["Q"]], worlds.x0[:, col["Q"]])


def test_direct_only_pathway_keeps_mediators_at_zero(synth):
    noise = sample_noise(synth.sem, 200, seed=2)
    worlds = path_specific_worlds(synth.sem, PathwaySet.of([("A", "Y")]), noise)
    np.testing.assert_array_equal(worlds.x1pi[:, 1:], worlds.x0[:, 1:])


def test_path_specific_refuses_witness(chain):
    graph, pi = chain
    sem = chain_sem(graph)
    with pytest.raises(RecantingWitnessError):
        path_specific_worlds(sem, pi, sample_noise(sem, 10, seed=0))


def test_path_specific_rejects_bad_pathways(synth):
    with pytest.raises(GraphValidationError):
        path_specific_worlds(synth.sem, PathwaySet.of([("A", "Q", "Y")]), sample_noise(synth.sem, 10, seed=0))


def test_feature_mismatch(synth):
    with pytest.raises(SemError, match="feature mismatch"):
        path_specific_worlds(synth.sem, synth.pi, sample_noise(synth.sem, 10, seed=0), features=("A", "Z"))


def test_oracle_piu_extremes(synth):
    features = synth.sem.graph.features
    ignores_a = linear_classifier(features, {"Q": 1.0})
    only_a = linear_classifier(features, {"A": 10.0}, bias=-5.0)
    assert oracle_piu(synth.sem, ignores_a, synth.pi, 2000, seed=0).value == 0.0
    full = oracle_piu(synth.sem, only_a, synth.pi, 2000, seed=0)
    assert full.value == 1.0
    assert full.stderr == 0.0


def test_oracle_piu_ignores_workers(synth):
    clf = linear_classifier(synth.sem.graph.features, {"A": 1.0, "D": 0.5, "Q": 0.2}, bias=-1.5)
    serial = oracle_piu(synth.sem, clf, synth.pi, 3000, seed=4, chunk_size=700)
    threaded = oracle_piu(synth.sem, clf, synth.pi, 3000, seed=4, chunk_size=700, workers=3)
    assert serial == threaded


@pytest.mark.parametrize("name", ["synth", "synth-latent"])
def test_all_paths_pathway_is_the_intervention(name):
    preset = get_preset(name)
    graph = preset.sem.graph
    every_path = PathwaySet.of(enumerate_paths(graph, graph.sensitive, graph.outcome))
    worlds = path_specific_worlds(preset.sem, every_path, sample_noise(preset.sem, 400, seed=5))
    treated = evaluate_world(intervene(preset.sem, 1), sample_noise(preset.sem, 400, seed=5))
    np.testing.assert_array_equal(worlds.x1pi, np.column_stack([treated[f] for f in worlds.features]))


def test_oracle_piu_is_stable_in_sample_size(synth):
    clf = linear_classifier(synth.sem.graph.features, {"A": 1.0, "D": 0.5, "Q": 0.2}, bias=-1.5)
    small = oracle_piu(synth.sem, clf, synth.pi, 20_000, seed=8)
    large = oracle_piu(synth.sem, clf, synth.pi, 80_000, seed=9)
    assert 0.0 < small.value < 1.0
    assert abs(small.value - large.value) <= 3 * np.hypot(small.stderr, large.stderr)


def test_conditional_mean_std(synth):
    features = synth.sem.graph.features
    only_a = linear_classifier(features, {"A": 10.0}, bias=-5.0)
    assert oracle_conditional_mean_std(synth.sem, only_a, synth.pi, 1000, seed=0) == 0.0
    constant = constant_classifier(features, 3.0)
    assert oracle_conditional_mean_std(synth.sem, constant, synth.pi, 1000, seed=0,
                                       grouping=Grouping(columns=("Q",), decimals=0)) == 0.0


def test_grouping_columns_must_be_features(synth):
    clf = constant_classifier(synth.sem.graph.features, 0.0)
    with pytest.raises(SemError):
        oracle_conditional_mean_std(synth.sem, clf, synth.pi, 100, seed=0, grouping=Grouping(columns=("Z",)))


def test_sem_config_round_trip(synth):
    sem, outcome = sem_from_dict(sem_to_dict(synth.sem, synth.outcome))
    assert outcome.expression.source == synth.outcome.expression.source
    pd.testing.assert_frame_equal(
        sample_observational(sem, outcome, 200, seed=9),
        sample_observational(synth.sem, synth.outcome, 200, seed=9),
    )
