"""
PIU bounds from marginal probabilities and partial-identification
intervals for the marginals under a latent R–Y confounder.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from estimation.ipw import EmptyStratumError, MarginalEstimates, UnsupportedGraphError

logger = logging.getLogger(__name__)

MAX_DISCRETE_LEVELS = 200


class DiscretizationError(ValueError):
    """Raised when a variable cannot be treated as discrete."""


@dataclass(frozen=True)
class IntervalEstimates:
    """[l0, u0] ∋ P(Y_{A⇐0}=1) and [l1, u1] ∋ P(Y_{A⇐1∥π}=1)."""
    l0: float
    u0: float
    l1: float
    u1: float

    def __post_init__(self):
        for lo, hi, name in ((self.l0, self.u0, "0"), (self.l1, self.u1, "1")):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"Interval {name} must satisfy 0 ≤ l ≤ u ≤ 1, got [{lo}, {hi}]")

    def contains(self, m: MarginalEstimates) -> bool:
        return self.l0 <= m.p0 <= self.u0 and self.l1 <= m.p1 <= self.u1


def independent_mismatch(m: MarginalEstimates) -> float:
    """P(Y0 ≠ Y1) if the two potential outcomes were independent: p1(1−p0) + (1−p1)p0."""
    return m.p1 * (1 - m.p0) + (1 - m.p1) * m.p0


def piu_upper_bound(m: MarginalEstimates) -> float:
    """Twice the independent mismatch; may exceed 1, in which case it says nothing."""
    return 2.0 * independent_mismatch(m)


def piu_feasible_range(m: MarginalEstimates) -> tuple[float, float]:
    """Smallest and largest PIU over joints consistent with the marginals."""
    lower = abs(m.p0 - m.p1)
    tight_upper = min(m.p1, 1 - m.p0) + min(m.p0, 1 - m.p1)
    return lower, tight_upper


@dataclass(frozen=True)
class LatentGrid:
    """
    Frozen ingredients of the latent-confounder bounds.

    inputs[a] stacks classifier inputs (A=a, M=m, R=r) in m-major order,
    p_m0[j] = P̂(M=m_j | A=0) and p_r[a][k] = P̂(R=r_k | A=a).
    """
    features: tuple[str, ...]
    m_values: np.ndarray
    r_values: np.ndarray
    p_m0: np.ndarray
    p_r: dict = field(repr=False)
    inputs: dict = field(repr=False)


@dataclass(frozen=True)
class LatentBounds:
    intervals: IntervalEstimates
    # d(bound)/d(c at grid input) for bound in l0, u0, l1, u1
    coefficients: dict = field(repr=False)


def _is_integer_valued(x):
    return bool(np.all(np.isfinite(x)) and np.all(x == np.round(x)))


def discretize(values: np.ndarray, n_bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """
    Map values to representative levels.

    Integer-valued inputs keep their own levels; anything else gets
    equal-frequency bins represented by their medians.

    Returns:
        (levels, level index per value)
    """
    values = np.asarray(values, dtype=float)
    if _is_integer_valued(values) and len(np.unique(values)) <= MAX_DISCRETE_LEVELS:
        levels, index = np.unique(values, return_inverse=True)
        return levels, index
    bins = pd.qcut(values, q=n_bins, labels=False, duplicates="drop")
    bins = np.asarray(bins, dtype=int)
    levels = np.array([np.median(values[bins == b]) for b in np.unique(bins)])
    _, index = np.unique(bins, return_inverse=True)
    return levels, index


def latent_grid(data, features, mediator: str, covariate: str, r_bins: int = 10) -> LatentGrid:
    """
    Estimate P̂(M | A=0) and P̂(R | A=a) from training data and lay out the evaluation grid.

    Raises:
        UnsupportedGraphError: If the classifier uses inputs other than A, M and R
        DiscretizationError: If M is not discrete
        EmptyStratumError: If an A stratum is empty, or a binned covariate level
            has no rows in one of the A arms
    """
    a_col = data.sensitive
    extra = [f for f in features if f not in (a_col, mediator, covariate)]
    if extra:
        raise UnsupportedGraphError(
            f"Latent-confounder bounds need a classifier over ({a_col}, {mediator}, {covariate}); "
            f"got extra inputs {extra}"
        )
    a = data.a
    if not (a == 0).any() or not (a == 1).any():
        raise EmptyStratumError("Latent-confounder bounds need rows with A=0 and A=1")

    m = data.frame[mediator].to_numpy(dtype=float)
    if not _is_integer_valued(m) or len(np.unique(m)) > MAX_DISCRETE_LEVELS:
        raise DiscretizationError(
            f"Mediator '{mediator}' must be discrete (integer-valued with at most "
            f"{MAX_DISCRETE_LEVELS} levels)"
        )
    m_values, m_index = np.unique(m, return_inverse=True)
    r = data.frame[covariate].to_numpy(dtype=float)
    binned = not (_is_integer_valued(r) and len(np.unique(r)) <= MAX_DISCRETE_LEVELS)
    r_values, r_index = discretize(r, r_bins)

    p_m0 = np.bincount(m_index[a == 0], minlength=len(m_values)) / (a == 0).sum()
    p_r = {
        arm: np.bincount(r_index[a == arm], minlength=len(r_values)) / (a == arm).sum()
        for arm in (0, 1)
    }
    if binned:
        for arm in (0, 1):
            empty = r_values[p_r[arm] == 0]
            if len(empty):
                raise EmptyStratumError(
                    f"Covariate '{covariate}' bin(s) at {empty.tolist()} have no rows with A={arm}; "
                    f"use fewer bins (r_bins={r_bins})"
                )

    mm, rr = np.meshgrid(m_values, r_values, indexing="ij")
    inputs = {}
    for arm in (0, 1):
        columns = {a_col: np.full(mm.size, float(arm)), mediator: mm.ravel(), covariate: rr.ravel()}
        inputs[arm] = np.column_stack([columns[f] for f in features])
    return LatentGrid(tuple(features), m_values, r_values, p_m0, p_r, inputs)


def bounds_from_grid(grid: LatentGrid, c0: np.ndarray, c1: np.ndarray) -> LatentBounds:
    """
    Evaluate the bounds from classifier outputs on the grid.

    Kinks follow the first-branch convention: max{0, x} is flat at x = 0
    and min{p, g} is flat at g = p.
    """
    n_m, n_r = len(grid.m_values), len(grid.r_values)
    out, coefs = {}, {}
    for arm, c in ((0, c0), (1, c1)):
        c = np.asarray(c, dtype=float).reshape(n_m, n_r)
        g = c @ grid.p_r[arm]
        slack = grid.p_m0 - 1 + g
        lower_active = slack > 0
        upper_active = g < grid.p_m0
        out[f"l{arm}"] = float(np.sum(np.where(lower_active, slack, 0.0)))
        out[f"u{arm}"] = float(np.sum(np.where(upper_active, g, grid.p_m0)))
        coefs[f"l{arm}"] = (lower_active[:, None] * grid.p_r[arm][None, :]).ravel()
        coefs[f"u{arm}"] = (upper_active[:, None] * grid.p_r[arm][None, :]).ravel()

    # float noise can push l a hair above u when the bounds collapse
    for arm in (0, 1):
        lo, hi = out[f"l{arm}"], out[f"u{arm}"]
        lo, hi = float(np.clip(lo, 0, 1)), float(np.clip(hi, 0, 1))
        out[f"l{arm}"], out[f"u{arm}"] = min(lo, hi), hi
    return LatentBounds(intervals=IntervalEstimates(**out), coefficients=coefs)


def latent_bounds(data, classifier, mediator: str, covariate: str, r_bins: int = 10,
                  grid: LatentGrid | None = None) -> IntervalEstimates:
    """
    Lower/upper bounds on both marginals when a latent H confounds R and Y and π = {A→Y}.

    For a ∈ {0, 1} (a = 1 for the π-marginal):
        l_a = Σ_m max{0, P̂(M=m|A=0) − 1 + Σ_r c(a, m, r) P̂(R=r|A=a)}
        u_a = Σ_m min{P̂(M=m|A=0), Σ_r c(a, m, r) P̂(R=r|A=a)}
    """
    grid = grid or latent_grid(data, classifier.features, mediator, covariate, r_bins)
    c0 = classifier.predict_proba(grid.inputs[0])
    c1 = classifier.predict_proba(grid.inputs[1])
    return bounds_from_grid(grid, c0, c1).intervals
