"""
Ground-truth structural equation models: sampling, interventions,
path-specific counterfactuals and oracle unfairness statistics.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
import pandas as pd
from scipy.stats import truncnorm

from causal.expressions import NOISE_NAME, Expression
from causal.graph import (
    CausalGraph,
    GraphValidationError,
    PathwaySet,
    RecantingWitnessError,
    check_recanting_witness,
    graph_from_dict,
    graph_to_dict,
    partition_parents,
    validate_graph,
    validate_pathways,
)

logger = logging.getLogger(__name__)

NOISE_KINDS = ("bernoulli", "gaussian", "truncated_gaussian", "uniform")
DEFAULT_CHUNK = 100_000


class SemError(ValueError):
    """Raised for inconsistent SEM definitions or classifier/SEM mismatches."""


class NonFiniteValueError(SemError):
    """Raised when an equation produces NaN or infinity."""


class ProbabilisticClassifier(Protocol):
    features: tuple[str, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise SemError(f"Unknown noise kind '{self.kind}'. Use one of {list(NOISE_KINDS)}")
        expected = {"bernoulli": 1, "gaussian": 2, "truncated_gaussian": 4, "uniform": 2}[self.kind]
        if len(self.params) != expected:
            raise SemError(f"{self.kind} noise takes {expected} parameters, got {self.params}")
        if self.kind == "bernoulli" and not 0.0 <= self.params[0] <= 1.0:
            raise SemError(f"Bernoulli p must lie in [0, 1], got {self.params[0]}")
        if self.kind in ("gaussian", "truncated_gaussian") and not self.params[1] > 0:
            raise SemError(f"Noise sigma must be positive, got {self.params[1]}")
        if self.kind == "truncated_gaussian" and not self.params[2] < self.params[3]:
            raise SemError(f"Truncation bounds need low < high, got {self.params[2:]}")
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise SemError(f"Uniform bounds need low < high, got {self.params}")

    @classmethod
    def bernoulli(cls, p):
        return cls("bernoulli", (float(p),))

    @classmethod
    def gaussian(cls, mu, sigma):
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def truncated_gaussian(cls, mu, sigma, low, high):
        return cls("truncated_gaussian", (float(mu), float(sigma), float(low), float(high)))

    @classmethod
    def uniform(cls, low=0.0, high=1.0):
        return cls("uniform", (float(low), float(high)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(n) < self.params[0]).astype(float)
        if self.kind == "gaussian":
            mu, sigma = self.params
            return rng.normal(mu, sigma, n)
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], n)
        mu, sigma, low, high = self.params
        return truncnorm.rvs((low - mu) / sigma, (high - mu) / sigma, loc=mu, scale=sigma,
                             size=n, random_state=rng)

    def to_dict(self) -> dict:
        names = {
            "bernoulli": ("p",),
            "gaussian": ("mu", "sigma"),
            "truncated_gaussian": ("mu", "sigma", "low", "high"),
            "uniform": ("low", "high"),
        }[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.params))}

    @classmethod
    def from_dict(cls, spec: dict) -> "NoiseSpec":
        kind = spec["kind"]
        if kind == "bernoulli":
            return cls.bernoulli(spec["p"])
        if kind == "gaussian":
            return cls.gaussian(spec["mu"], spec["sigma"])
        if kind == "truncated_gaussian":
            return cls.truncated_gaussian(spec["mu"], spec["sigma"], spec["low"], spec["high"])
        if kind == "uniform":
            return cls.uniform(spec.get("low", 0.0), spec.get("high", 1.0))
        raise SemError(f"Unknown noise kind '{kind}'")


@dataclass(frozen=True)
class StructuralEquation:
    """V = f_V(pa(V), U_V) with f_V written in the closed expression language."""
    node: str
    parents: tuple[str, ...]
    expression: Expression

    @classmethod
    def of(cls, node: str, parents, expression: str) -> "StructuralEquation":
        return cls(node=node, parents=tuple(parents), expression=Expression.parse(expression))

    def __post_init__(self):
        unknown = self.expression.names - set(self.parents) - {NOISE_NAME}
        if unknown:
            raise SemError(
                f"Equation for '{self.node}' references {sorted(unknown)}, "
                f"which are not among its parents {list(self.parents)}"
            )

    def evaluate(self, values: dict, noise: np.ndarray) -> np.ndarray:
        return self.expression.evaluate({p: values[p] for p in self.parents}, noise)


@dataclass(frozen=True)
class Sem:
    """
    Structural equation model over a causal graph.

    `equations` covers every non-outcome node (observed and latent); `noise`
    holds one distribution per equation, plus optionally the outcome node's
    noise used by Bernoulli outcome rules.
    """
    graph: CausalGraph
    equations: dict = field(compare=True)
    noise: dict = field(compare=True)

    def __post_init__(self):
        issues = validate_sem(self)
        if issues:
            raise SemError("; ".join(issues))

    @property
    def order(self) -> list[str]:
        y = self.graph.outcome
        return [n for n in self.graph.topological_order() if n != y]

    @property
    def outcome_noise(self) -> NoiseSpec:
        return self.noise.get(self.graph.outcome, NoiseSpec.uniform())


@dataclass(frozen=True)
class NoiseDraw:
    """Realized exogenous noise, one array of length n per node."""
    values: dict

    @property
    def n(self) -> int:
        return len(next(iter(self.values.values())))

    def __getitem__(self, node):
        return self.values[node]


@dataclass(frozen=True)
class PotentialOutcomePair:
    y0: np.ndarray
    y1pi: np.ndarray


@dataclass(frozen=True)
class PathSpecificWorlds:
    """Node values under the factual, do(A=0), do(A=1) and π-specific worlds."""
    factual: dict
    world0: dict
    world1: dict
    pi_world: dict
    x0: np.ndarray
    x1pi: np.ndarray
    x_factual: np.ndarray
    features: tuple[str, ...]


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    n: int


@dataclass(frozen=True)
class Grouping:
    """Subgroup definition for the conditional-mean statistic."""
    columns: tuple[str, ...] | None = None
    decimals: int | None = 1


def validate_sem(sem: Sem) -> list[str]:
    issues = validate_graph(sem.graph)
    if issues:
        return issues
    y = sem.graph.outcome
    required = {n for n in sem.graph.nodes if n != y}
    covered = set(sem.equations)
    if covered != required:
        missing = sorted(required - covered)
        extra = sorted(covered - required)
        issues.append(f"Equations must cover exactly the non-outcome nodes (missing {missing}, extra {extra})")
    for node, eq in sem.equations.items():
        if eq.node != node:
            issues.append(f"Equation registered under '{node}' is for '{eq.node}'")
            continue
        if node in required:
            graph_parents = set(sem.graph.parents(node))
            if not set(eq.parents) <= graph_parents:
                issues.append(
                    f"Equation for '{node}' uses parents {sorted(set(eq.parents) - graph_parents)} "
                    "that are not graph parents"
                )
        if node not in sem.noise:
            issues.append(f"No noise distribution for '{node}'")
        elif eq.expression.uses_bernoulli and sem.noise[node].kind != "uniform":
            issues.append(f"'{node}' uses bernoulli() but its noise is not uniform")
    return issues


def intervene(sem: Sem, value: int) -> Sem:
    """do(A=value): replace the sensitive node's equation by the constant."""
    a = sem.graph.sensitive
    equations = dict(sem.equations)
    equations[a] = StructuralEquation.of(a, (), str(int(value)))
    return replace(sem, equations=equations)


def sample_noise(sem: Sem, n: int, seed: int, chunk: int = 0) -> NoiseDraw:
    """
    Draw exogenous noise for n units.

    Each node has its own stream derived from (seed, chunk, node index), so a
    node's draws do not depend on which other nodes exist.
    """
    if n < 1:
        raise SemError(f"n must be at least 1, got {n}")
    values = {}
    nodes = list(sem.graph.nodes)
    for idx, node in enumerate(nodes):
        if node == sem.graph.outcome:
            spec = sem.outcome_noise
        elif node in sem.noise:
            spec = sem.noise[node]
        else:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(chunk), idx]))
        values[node] = spec.sample(rng, n)
    return NoiseDraw(values)


def evaluate_world(sem: Sem, noise: NoiseDraw) -> dict:
    """Evaluate every non-outcome node in topological order under one noise draw."""
    values = {}
    for node in sem.order:
        out = sem.equations[node].evaluate(values, noise[node])
        out = np.broadcast_to(out, (noise.n,)).astype(float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteValueError(f"Equation for '{node}' produced a non-finite value")
        values[node] = out
    return values


def _decide(classifier, X, u, stochastic):
    proba = classifier.predict_proba(X)
    if stochastic:
        return (u < proba).astype(int)
    return (proba >= 0.5).astype(int)


def sample_observational(sem: Sem, outcome_rule, n: int, seed: int,
                         stochastic: bool = False) -> pd.DataFrame:
    """
    Sample n observational rows (latent nodes dropped).

    Args:
        sem: Ground-truth SEM
        outcome_rule: StructuralEquation for the outcome, or a classifier
        n: Number of rows
        seed: Seed; identical seeds give identical frames
        stochastic: With a classifier, draw Y ~ Bernoulli(c(x)) instead of thresholding

    Returns:
        DataFrame with the observed feature columns followed by the outcome column
    """
    noise = sample_noise(sem, n, seed)
    values = evaluate_world(sem, noise)
    y_name = sem.graph.outcome
    features = list(sem.graph.features)

    if isinstance(outcome_rule, StructuralEquation):
        y = outcome_rule.evaluate(values, noise[y_name])
        if not np.all(np.isfinite(y)):
            raise NonFiniteValueError(f"Outcome equation for '{y_name}' produced a non-finite value")
    else:
        X = np.column_stack([values[f] for f in outcome_rule.features])
        y = _decide(outcome_rule, X, noise[y_name], stochastic)

    frame = pd.DataFrame({f: values[f] for f in features})
    frame[y_name] = np.asarray(y).astype(int)
    return frame


def path_specific_worlds(sem: Sem, pi: PathwaySet, noise: NoiseDraw,
                         features: tuple[str, ...] | None = None) -> PathSpecificWorlds:
    """
    Build the classifier inputs of Y_{A⇐0} and Y_{A⇐1∥π} under one shared noise draw.

    Every node is evaluated under do(A=0) and do(A=1). In the π-world a node
    takes the π-world value of parents joined to it by an edge of π and the
    do(A=0) value of all other parents; the outcome's inputs are assembled
    the same way.
    """
    graph = sem.graph
    issues = validate_pathways(graph, pi)
    if issues:
        raise GraphValidationError(issues)
    witness = check_recanting_witness(graph, pi)
    if witness is not None:
        raise RecantingWitnessError(witness)

    features = tuple(features or graph.features)
    latent = set(graph.latent)
    bad = [f for f in features if not graph.has_node(f) or f in latent or f == graph.outcome]
    if bad:
        raise SemError(f"Classifier feature mismatch: {bad} are not observed features of the SEM")

    a, y = graph.sensitive, graph.outcome
    factual = evaluate_world(sem, noise)
    world0 = evaluate_world(intervene(sem, 0), noise)
    world1 = evaluate_world(intervene(sem, 1), noise)

    pi_world = {a: np.ones(noise.n)}
    for node in sem.order:
        if node == a:
            continue
        part = partition_parents(graph, pi, node)
        inputs = {p: (pi_world[p] if p in part.on_path else world0[p]) for p in graph.parents(node)
                  if p != y}
        out = sem.equations[node].evaluate(inputs, noise[node])
        pi_world[node] = np.broadcast_to(out, (noise.n,)).astype(float)

    outcome_part = partition_parents(graph, pi, y)
    x1pi_cols = [pi_world[f] if f in outcome_part.on_path else world0[f] for f in features]
    return PathSpecificWorlds(
        factual=factual,
        world0=world0,
        world1=world1,
        pi_world=pi_world,
        x0=np.column_stack([world0[f] for f in features]),
        x1pi=np.column_stack(x1pi_cols),
        x_factual=np.column_stack([factual[f] for f in features]),
        features=features,
    )


def sample_path_specific_pair(sem: Sem, classifier: ProbabilisticClassifier, pi: PathwaySet,
                              noise: NoiseDraw, stochastic: bool = False) -> PotentialOutcomePair:
    """
    Potential outcomes (Y_{A⇐0}, Y_{A⇐1∥π}) for every unit of the noise draw.

    Outcomes use the decision rule c(x) >= 0.5, or with `stochastic` a
    Bernoulli draw sharing the outcome noise U_Y between both worlds.
    """
    worlds = path_specific_worlds(sem, pi, noise, classifier.features)
    u = noise.values.get(sem.graph.outcome)
    return PotentialOutcomePair(
        y0=_decide(classifier, worlds.x0, u, stochastic),
        y1pi=_decide(classifier, worlds.x1pi, u, stochastic),
    )


def _chunks(n, chunk_size):
    sizes = [chunk_size] * (n // chunk_size)
    if n % chunk_size:
        sizes.append(n % chunk_size)
    return list(enumerate(sizes))


def _mismatch_chunk(sem, classifier, pi, seed, stochastic, with_features, item):
    chunk, size = item
    noise = sample_noise(sem, size, seed, chunk=chunk)
    worlds = path_specific_worlds(sem, pi, noise, classifier.features)
    u = noise.values.get(sem.graph.outcome)
    y0 = _decide(classifier, worlds.x0, u, stochastic)
    y1 = _decide(classifier, worlds.x1pi, u, stochastic)
    mismatch = (y0 != y1).astype(int)
    return (mismatch, worlds.x_factual) if with_features else (mismatch, None)


def _run_chunks(sem, classifier, pi, n, seed, stochastic, with_features, chunk_size, workers):
    if n < 1:
        raise SemError(f"n must be at least 1, got {n}")
    items = _chunks(n, chunk_size)

    def job(item):
        return _mismatch_chunk(sem, classifier, pi, seed, stochastic, with_features, item)

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, items))
    return [job(item) for item in items]


def oracle_piu(sem: Sem, classifier: ProbabilisticClassifier, pi: PathwaySet, n: int, seed: int,
               stochastic: bool = False, chunk_size: int = DEFAULT_CHUNK,
               workers: int = 1) -> OracleEstimate:
    """
    Monte-Carlo PIU: share of units whose two potential outcomes differ.

    Results depend only on (seed, n, chunk_size), never on `workers`.
    """
    results = _run_chunks(sem, classifier, pi, n, seed, stochastic, False, chunk_size, workers)
    mismatches = sum(int(m.sum()) for m, _ in results)
    p = mismatches / n
    return OracleEstimate(value=p, stderr=math.sqrt(p * (1 - p) / n), n=n)


def oracle_conditional_mean_std(sem: Sem, classifier: ProbabilisticClassifier, pi: PathwaySet,
                                n: int, seed: int, grouping: Grouping = Grouping(),
                                stochastic: bool = False, chunk_size: int = DEFAULT_CHUNK,
                                workers: int = 1) -> float:
    """
    Population standard deviation of per-subgroup mean unfair effects.

    Units are grouped by their factual feature values, rounded to
    `grouping.decimals` places (None disables rounding).
    """
    results = _run_chunks(sem, classifier, pi, n, seed, stochastic, True, chunk_size, workers)
    mismatch = np.concatenate([m for m, _ in results])
    X = np.vstack([x for _, x in results])

    features = list(classifier.features)
    columns = list(grouping.columns or features)
    unknown = [c for c in columns if c not in features]
    if unknown:
        raise SemError(f"Grouping columns {unknown} are not classifier features")
    frame = pd.DataFrame(X, columns=features)[columns]
    if grouping.decimals is not None:
        frame = frame.round(grouping.decimals)
    frame["_mismatch"] = mismatch

    grouped = frame.groupby(columns, sort=True)["_mismatch"]
    means = grouped.mean().to_numpy()
    if grouping.decimals is None and grouped.size().max() == 1:
        logger.warning("Every subgroup is a singleton; the conditional-mean statistic is degenerate")
    return float(np.std(means, ddof=0))


def sem_to_dict(sem: Sem, outcome_rule: StructuralEquation | None = None) -> dict:
    """Versioned SEM config (graph + per-node equations + noise)."""
    nodes = []
    for node in sem.order:
        eq = sem.equations[node]
        nodes.append({
            "name": node,
            "parents": list(eq.parents),
            "noise": sem.noise[node].to_dict(),
            "expression": eq.expression.source,
        })
    config = {"version": 1, "graph": graph_to_dict(sem.graph), "nodes": nodes}
    if outcome_rule is not None:
        config["outcome"] = {
            "name": outcome_rule.node,
            "parents": list(outcome_rule.parents),
            "noise": sem.outcome_noise.to_dict(),
            "expression": outcome_rule.expression.source,
        }
    return config


def sem_from_dict(config: dict) -> tuple[Sem, StructuralEquation | None]:
    if config.get("version") != 1:
        raise SemError(f"Unsupported SEM config version {config.get('version')!r}")
    graph, _pi = graph_from_dict(config["graph"])
    equations, noise = {}, {}
    for spec in config["nodes"]:
        equations[spec["name"]] = StructuralEquation.of(spec["name"], spec["parents"], spec["expression"])
        noise[spec["name"]] = NoiseSpec.from_dict(spec["noise"])
    outcome = None
    if "outcome" in config:
        spec = config["outcome"]
        outcome = StructuralEquation.of(spec["name"], spec["parents"], spec["expression"])
        noise[spec["name"]] = NoiseSpec.from_dict(spec["noise"])
    return Sem(graph=graph, equations=equations, noise=noise), outcome

