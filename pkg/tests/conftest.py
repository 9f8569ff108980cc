import numpy as np
import pandas as pd
import pytest

from causal.graph import FEATURE, OUTCOME, SENSITIVE, CausalGraph, PathwaySet
from causal.presets import hiring_graph, hiring_pathways, latent_graph
from training.model import Classifier
from utils.data_utils import dataset_from_frame, synth_preset


@pytest.fixture
def hiring():
    return hiring_graph()


@pytest.fixture
def hiring_pi():
    return hiring_pathways()


@pytest.fixture
def latent():
    return latent_graph()


@pytest.fixture
def chain():
    """A→M1→M2→Y unfair while M1→Y is not: M1 recants."""
    graph = CausalGraph.from_roles(
        {"A": SENSITIVE, "M1": FEATURE, "M2": FEATURE, "Y": OUTCOME},
        [("A", "M1"), ("M1", "M2"), ("M1", "Y"), ("M2", "Y")],
    )
    return graph, PathwaySet.of([("A", "M1", "M2", "Y")])


@pytest.fixture(scope="module")
def synth_sample():
    """(Dataset, Sem) of 1500 rows from the multiplicative-noise hiring SEM."""
    return synth_preset("synth", 1500, seed=7)


@pytest.fixture(scope="module")
def latent_sample():
    return synth_preset("synth-latent", 1500, seed=11)


@pytest.fixture
def tiny_frame():
    """Ten hand-written hiring rows, four with A=0."""
    return pd.DataFrame({
        "A": [0, 1, 1, 0, 1, 1, 0, 1, 0, 1],
        "Q": [1.0, 2.0, -1.0, 0.0, 3.0, 2.0, 1.0, -2.0, 4.0, 0.0],
        "D": [0.0, 1.0, 2.0, 1.0, 1.0, 3.0, 0.0, 1.0, 2.0, 1.0],
        "M": [0.5, 3.2, 3.0, 0.1, 4.0, 3.3, 0.9, 2.8, 1.2, 3.1],
        "Y": [0, 1, 0, 0, 1, 1, 0, 0, 1, 1],
    })


@pytest.fixture
def tiny(tiny_frame, hiring):
    return dataset_from_frame(tiny_frame, hiring)


def constant_classifier(features, bias):
    """Logistic model whose output is sigmoid(bias) everywhere."""
    features = tuple(features)
    return Classifier(kind="logreg", theta=np.r_[np.zeros(len(features)), bias], features=features)


def linear_classifier(features, weights, bias=0.0):
    """Unscaled logistic model with the given per-feature weights."""
    features = tuple(features)
    return Classifier(kind="logreg", theta=np.r_[[weights.get(f, 0.0) for f in features], bias],
                      features=features)


def numeric_grad(fn, theta, eps=1e-6):
    """Central differences of a scalar function of θ."""
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        step = np.zeros_like(theta)
        step[i] = eps
        grad[i] = (fn(theta + step) - fn(theta - step)) / (2 * eps)
    return grad
