"""
IPW estimates of the marginal potential-outcome probabilities
P(Y_{A⇐0}=1) and P(Y_{A⇐1∥π}=1).

The supported graph family splits the observed non-outcome nodes into
baseline covariates C (non-descendants of A), π-mediators Mπ (children of
A joined to it by an edge of π) and the remaining descendants Mπ̄. With
those blocks the weights are

    w  = 1 / P(A=0 | C)
    w' = P(A=1 | C, Mπ) P(A=0 | C, Mπ, Mπ̄)
         / [P(A=1 | C) P(A=0 | C, Mπ) P(A=1 | C, Mπ, Mπ̄)]
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from causal.graph import CausalGraph, PathwaySet
from estimation.propensity import PropensityConfig, PropensityModel, fit_propensity, predict_propensity

logger = logging.getLogger(__name__)

QUANTILES = (0.0, 0.05, 0.5, 0.95, 1.0)


class UnsupportedGraphError(ValueError):
    """Raised when a graph/π pair falls outside the supported weight family."""


class EmptyStratumError(ValueError):
    """Raised when the data holds no A=0 or no A=1 rows."""


@dataclass(frozen=True)
class WeightRecipe:
    c: tuple[str, ...]
    m_pi: tuple[str, ...]
    m_bar: tuple[str, ...]

    def __post_init__(self):
        blocks = [set(self.c), set(self.m_pi), set(self.m_bar)]
        if blocks[0] & blocks[1] or blocks[0] & blocks[2] or blocks[1] & blocks[2]:
            raise UnsupportedGraphError(f"Weight recipe blocks overlap: {self}")

    def __str__(self):
        return f"C={list(self.c)}, Mπ={list(self.m_pi)}, Mπ̄={list(self.m_bar)}"


@dataclass(frozen=True)
class RecipePropensities:
    """The three propensity models a recipe needs, keyed by conditioning set."""
    c: PropensityModel | None
    c_mpi: PropensityModel | None
    full: PropensityModel | None

    def require(self):
        missing = [name for name, m in (("C", self.c), ("C∪Mπ", self.c_mpi), ("C∪Mπ∪Mπ̄", self.full))
                   if m is None]
        if missing:
            raise ValueError(f"Missing propensity model for conditioning set(s) {missing}")


@dataclass(frozen=True)
class WeightDiagnostics:
    ess0: float
    ess1: float
    w_quantiles: tuple[float, ...]
    w_prime_quantiles: tuple[float, ...]


@dataclass(frozen=True)
class MarginalEstimates:
    """p0 = P̂(Y_{A⇐0}=1), p1 = P̂(Y_{A⇐1∥π}=1); raw values are pre-clamp."""
    p0: float
    p1: float
    raw_p0: float | None = None
    raw_p1: float | None = None
    diagnostics: WeightDiagnostics | None = field(default=None, compare=False)

    @property
    def clamped(self) -> bool:
        return (self.raw_p0 is not None and self.raw_p0 != self.p0) or \
               (self.raw_p1 is not None and self.raw_p1 != self.p1)

    def as_row(self) -> dict:
        row = {"p0": self.p0, "p1": self.p1, "raw_p0": self.raw_p0, "raw_p1": self.raw_p1}
        if self.diagnostics is not None:
            d = self.diagnostics
            row.update({"ess0": d.ess0, "ess1": d.ess1})
            for q, wq, wpq in zip(QUANTILES, d.w_quantiles, d.w_prime_quantiles):
                row[f"w_q{q:g}"] = wq
                row[f"w_prime_q{q:g}"] = wpq
        return row


def recipe_from_graph(graph: CausalGraph, pi: PathwaySet) -> WeightRecipe:
    """
    Derive the C / Mπ / Mπ̄ blocks for a graph and π.

    Raises:
        UnsupportedGraphError: When an off-π mediator is an ancestor of a
            π-mediator, or when A→Y is an edge but not part of π
    """
    a, y = graph.sensitive, graph.outcome
    latent = set(graph.latent)
    if latent:
        logger.warning("Graph has latent node(s) %s; IPW weights assume conditional ignorability",
                       sorted(latent))
    if (a, y) in set(graph.edges) and (a, y) not in pi.edges:
        raise UnsupportedGraphError(
            f"Edge {a}→{y} exists but is not unfair; the A=1 stratum cannot represent Y_(A⇐1∥π)"
        )

    observed = [n for n in graph.features if n != a]
    descendants = graph.descendants(a)
    m_pi = [n for n in observed if (a, n) in pi.edges]
    m_bar = [n for n in observed if n in descendants and n not in m_pi]
    c = [n for n in observed if n not in descendants]

    for node in m_bar:
        blocked = [m for m in m_pi if node in graph.ancestors(m)]
        if blocked:
            raise UnsupportedGraphError(
                f"Off-π mediator '{node}' is an ancestor of π-mediator(s) {blocked}; "
                "no C/Mπ/Mπ̄ weight recipe exists for this graph"
            )
    return WeightRecipe(c=tuple(c), m_pi=tuple(m_pi), m_bar=tuple(m_bar))


def fit_recipe_propensities(data, recipe: WeightRecipe,
                            config: PropensityConfig = PropensityConfig()) -> RecipePropensities:
    """Fit P(A=1 | ·) on C, C∪Mπ and C∪Mπ∪Mπ̄ (reusing a model when two sets coincide)."""
    frame, a = data.frame, data.sensitive
    cols_c = data.columns_for(recipe.c)
    cols_cm = data.columns_for((*recipe.c, *recipe.m_pi))
    cols_all = data.columns_for((*recipe.c, *recipe.m_pi, *recipe.m_bar))

    c = fit_propensity(frame, a, cols_c, config)
    c_mpi = c if cols_cm == cols_c else fit_propensity(frame, a, cols_cm, config)
    full = c_mpi if cols_all == cols_cm else fit_propensity(frame, a, cols_all, config)
    logger.info("Fitted propensities for recipe %s", recipe)
    return RecipePropensities(c=c, c_mpi=c_mpi, full=full)


def ipw_weights(recipe: WeightRecipe, propensities: RecipePropensities, rows) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-row weights (w, w′).

    Args:
        recipe: Block structure (kept for signature symmetry with the estimator)
        propensities: Fitted models for the three conditioning sets
        rows: DataFrame or dict holding every conditioning column

    Returns:
        (w, w′) arrays, finite and positive
    """
    propensities.require()
    p1_c = predict_propensity(propensities.c, rows)
    p1_cm = predict_propensity(propensities.c_mpi, rows)
    p1_all = predict_propensity(propensities.full, rows)
    w = 1.0 / (1.0 - p1_c)
    w_prime = (p1_cm * (1.0 - p1_all)) / (p1_c * (1.0 - p1_cm) * p1_all)
    return w, w_prime


def ipw_coefficients(a: np.ndarray, w: np.ndarray, w_prime: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Linear coefficients k0, k1 with p0 = k0·c and p1 = k1·c.

    Raises:
        EmptyStratumError: If either A stratum is empty
    """
    a = np.asarray(a)
    n = len(a)
    if n == 0 or not (a == 0).any() or not (a == 1).any():
        raise EmptyStratumError(
            f"IPW needs both A strata (n={n}, A=0 rows={int((a == 0).sum())}, A=1 rows={int((a == 1).sum())})"
        )
    k0 = (a == 0) * w / n
    k1 = (a == 1) * w_prime / n
    return k0, k1


def _ess(weights):
    total = weights.sum()
    return float(total ** 2 / np.square(weights).sum()) if total > 0 else 0.0


def weight_diagnostics(a, w, w_prime) -> WeightDiagnostics:
    w0 = w[a == 0]
    w1 = w_prime[a == 1]
    return WeightDiagnostics(
        ess0=_ess(w0),
        ess1=_ess(w1),
        w_quantiles=tuple(float(q) for q in np.quantile(w0, QUANTILES)),
        w_prime_quantiles=tuple(float(q) for q in np.quantile(w1, QUANTILES)),
    )


def ipw_marginals(data, classifier, recipe: WeightRecipe, propensities: RecipePropensities,
                  clamp: bool = True) -> MarginalEstimates:
    """
    p0 = (1/n) Σ 1[a_i=0] w_i c(x_i),  p1 = (1/n) Σ 1[a_i=1] w′_i c(x_i).

    Each estimate is clamped into [0, 1]; the pre-clamp values are retained.
    """
    a = data.a
    w, w_prime = ipw_weights(recipe, propensities, data.frame)
    k0, k1 = ipw_coefficients(a, w, w_prime)
    c = classifier.predict_proba(data.frame[list(classifier.features)].to_numpy(dtype=float))
    raw_p0, raw_p1 = float(k0 @ c), float(k1 @ c)
    p0, p1 = raw_p0, raw_p1
    if clamp:
        p0, p1 = float(np.clip(raw_p0, 0.0, 1.0)), float(np.clip(raw_p1, 0.0, 1.0))
        if (p0, p1) != (raw_p0, raw_p1):
            logger.warning("Clamped IPW marginals (%.4f, %.4f) into [0, 1]", raw_p0, raw_p1)
    return MarginalEstimates(p0=p0, p1=p1, raw_p0=raw_p0, raw_p1=raw_p1,
                             diagnostics=weight_diagnostics(a, w, w_prime))
