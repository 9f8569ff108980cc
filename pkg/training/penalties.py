"""
Fairness penalties G(θ) and their gradients.

Each penalty is a formula on marginal (or interval) estimates plus an
evaluator that maps the formula's gradient back onto θ through the
classifier's vector-Jacobian product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from causal.graph import PathwaySet
from causal.sem import Sem, path_specific_worlds, sample_noise
from estimation.bounds import IntervalEstimates, LatentGrid, bounds_from_grid
from estimation.ipw import MarginalEstimates, ipw_coefficients
from training.model import Classifier, forward, forward_vjp

logger = logging.getLogger(__name__)

PENALTY_KINDS = ("none", "piu-ub", "fio", "piu-ub-latent", "piu-oracle")


def penalty_piu_ub(m: MarginalEstimates) -> tuple[float, tuple[float, float]]:
    """p1(1−p0) + (1−p1)p0 with gradient (1−2p1, 1−2p0) in (p0, p1)."""
    value = m.p1 * (1 - m.p0) + (1 - m.p1) * m.p0
    return value, (1 - 2 * m.p1, 1 - 2 * m.p0)


def penalty_fio(m: MarginalEstimates) -> tuple[float, tuple[float, float]]:
    """|p1 − p0|; the subgradient is zero at p1 = p0."""
    diff = m.p1 - m.p0
    sign = float(np.sign(diff))
    return abs(diff), (-sign, sign)


def penalty_latent(iv: IntervalEstimates) -> tuple[float, dict]:
    """u1(1−l0) + (1−l1)u0, gradient keyed by l0, u0, l1, u1."""
    value = iv.u1 * (1 - iv.l0) + (1 - iv.l1) * iv.u0
    grad = {"l0": -iv.u1, "u0": 1 - iv.l1, "l1": -iv.u0, "u1": 1 - iv.l0}
    return value, grad


def penalty_oracle(c0: np.ndarray, c1: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Mean of c1(1−c0) + (1−c1)c0 over shared-noise pairs.

    Returns:
        (value, ∂/∂c0, ∂/∂c1)
    """
    n = len(c0)
    value = float(np.mean(c1 * (1 - c0) + (1 - c1) * c0))
    return value, (1 - 2 * c1) / n, (1 - 2 * c0) / n


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    grad: np.ndarray
    p0: float
    p1: float


class Penalty:
    """Evaluator interface: penalty and θ-gradient on a minibatch."""
    kind = "none"

    def evaluate(self, clf: Classifier, idx: np.ndarray, step: int) -> PenaltyValue:
        return PenaltyValue(0.0, np.zeros_like(clf.theta), float("nan"), float("nan"))

    def full_value(self, clf: Classifier) -> PenaltyValue:
        return PenaltyValue(0.0, np.zeros_like(clf.theta), float("nan"), float("nan"))

    @property
    def needs_both_strata(self) -> bool:
        return False


class IpwPenalty(Penalty):
    """piu-ub or fio on IPW marginals estimated over the batch rows."""

    def __init__(self, kind: str, X: np.ndarray, a: np.ndarray, w: np.ndarray, w_prime: np.ndarray,
                 clamp: bool = False):
        if kind not in ("piu-ub", "fio"):
            raise ValueError(f"IPW penalty kind must be piu-ub or fio, got {kind}")
        self.kind = kind
        self.X, self.a, self.w, self.w_prime = X, np.asarray(a), w, w_prime
        self.clamp = clamp
        self.formula = penalty_piu_ub if kind == "piu-ub" else penalty_fio

    @property
    def needs_both_strata(self) -> bool:
        return True

    def _on_rows(self, clf, idx):
        k0, k1 = ipw_coefficients(self.a[idx], self.w[idx], self.w_prime[idx])
        X = self.X[idx]
        c = forward(clf, X)
        p0, p1 = float(k0 @ c), float(k1 @ c)
        d0 = d1 = 1.0
        if self.clamp:
            d0 = float(0.0 <= p0 <= 1.0)
            d1 = float(0.0 <= p1 <= 1.0)
            p0, p1 = float(np.clip(p0, 0, 1)), float(np.clip(p1, 0, 1))
        value, (g0, g1) = self.formula(MarginalEstimates(p0, p1))
        _, grad = forward_vjp(clf, X, g0 * d0 * k0 + g1 * d1 * k1)
        return PenaltyValue(value, grad, p0, p1)

    def evaluate(self, clf, idx, step):
        return self._on_rows(clf, idx)

    def full_value(self, clf):
        return self._on_rows(clf, np.arange(len(self.a)))


class LatentPenalty(Penalty):
    """Interval penalty over the frozen latent-confounder grid; independent of the batch."""
    kind = "piu-ub-latent"

    def __init__(self, grid: LatentGrid):
        self.grid = grid

    def evaluate(self, clf, idx, step):
        g = self.grid
        c0 = forward(clf, g.inputs[0])
        c1 = forward(clf, g.inputs[1])
        bounds = bounds_from_grid(g, c0, c1)
        value, dg = penalty_latent(bounds.intervals)
        k = bounds.coefficients
        _, grad0 = forward_vjp(clf, g.inputs[0], dg["l0"] * k["l0"] + dg["u0"] * k["u0"])
        _, grad1 = forward_vjp(clf, g.inputs[1], dg["l1"] * k["l1"] + dg["u1"] * k["u1"])
        iv = bounds.intervals
        return PenaltyValue(value, grad0 + grad1, (iv.l0 + iv.u0) / 2, (iv.l1 + iv.u1) / 2)

    def full_value(self, clf):
        return self.evaluate(clf, None, 0)


class OraclePenalty(Penalty):
    """
    True PIU of the probabilistic classifier under the generating SEM.

    Every step draws a fresh seeded batch of shared-noise pairs; the
    full-data value uses one fixed draw.
    """
    kind = "piu-oracle"

    def __init__(self, sem: Sem, pi: PathwaySet, features, seed: int, n_pairs: int = 1000,
                 n_full: int = 10_000):
        self.sem, self.pi, self.features = sem, pi, tuple(features)
        self.seed, self.n_pairs, self.n_full = seed, n_pairs, n_full
        self._full_worlds = None

    def _worlds(self, n, chunk):
        noise = sample_noise(self.sem, n, self.seed, chunk=chunk)
        return path_specific_worlds(self.sem, self.pi, noise, self.features)

    def _on_worlds(self, clf, worlds):
        c0 = forward(clf, worlds.x0)
        c1 = forward(clf, worlds.x1pi)
        value, d0, d1 = penalty_oracle(c0, c1)
        _, grad0 = forward_vjp(clf, worlds.x0, d0)
        _, grad1 = forward_vjp(clf, worlds.x1pi, d1)
        return PenaltyValue(value, grad0 + grad1, float(c0.mean()), float(c1.mean()))

    def evaluate(self, clf, idx, step):
        return self._on_worlds(clf, self._worlds(self.n_pairs, step + 1))

    def full_value(self, clf):
        if self._full_worlds is None:
            self._full_worlds = self._worlds(self.n_full, 0)
        return self._on_worlds(clf, self._full_worlds)
