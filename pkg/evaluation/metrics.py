"""
Fairness report: accuracy, the four unfair-effect statistics, the PIU
feasible range and a test-set bound on the error rate.

    stat_a  mean unfair effect p1 − p0 (IPW estimate)
    stat_b  std of conditional mean unfair effects (oracle only)
    stat_c  PIU upper bound 2(p1(1−p0) + (1−p1)p0) (IPW estimate)
    stat_d  PIU (oracle only)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from scipy.stats import binom

from causal.graph import CausalGraph, PathwaySet
from causal.sem import Grouping, Sem, oracle_conditional_mean_std, oracle_piu
from estimation.bounds import piu_feasible_range, piu_upper_bound
from estimation.ipw import (
    MarginalEstimates,
    RecipePropensities,
    WeightRecipe,
    ipw_coefficients,
    ipw_marginals,
    ipw_weights,
)
from utils.config_utils import EvaluationConfig, derive_seed

logger = logging.getLogger(__name__)

# Provenance flags
ESTIMATED = "estimated"
ORACLE = "oracle"
STRUCTURAL = "structural"
UNAVAILABLE = "unavailable"

STATS = ("stat_a", "stat_b", "stat_c", "stat_d")
FEASIBILITY_GRID = 1001
STRUCTURAL_SE_TOLERANCE = 4


@dataclass(frozen=True)
class FeasibilityResult:
    """Whether the marginals satisfy each constraint, and the worst PIU each region admits."""
    delta: float
    delta_prime: float
    piu_bound_ok: bool
    fio_ok: bool
    point_worst_piu: float
    piu_region_worst_piu: float
    fio_region_worst_piu: float


@dataclass
class FairnessReport:
    accuracy: float
    stat_a: float | None
    stat_b: float | None
    stat_c: float | None
    stat_d: float | None
    feasible_lower: float | None
    feasible_upper: float | None
    provenance: dict = field(default_factory=dict)
    marginals: MarginalEstimates | None = None
    oracle_stderr: float | None = None
    errors: int = 0
    n: int = 0
    error_bound: tuple[float, float] | None = None
    feasibility: FeasibilityResult | None = None
    structural_check: dict | None = None

    def as_row(self) -> dict:
        row = {
            "accuracy": self.accuracy,
            **{s: getattr(self, s) for s in STATS},
            **{f"{s}_provenance": self.provenance.get(s, UNAVAILABLE) for s in STATS},
            "feasible_lower": self.feasible_lower,
            "feasible_upper": self.feasible_upper,
            "oracle_stderr": self.oracle_stderr,
            "errors": self.errors,
            "n": self.n,
            "error_lower": self.error_bound[0] if self.error_bound else None,
            "error_upper": self.error_bound[1] if self.error_bound else None,
        }
        if self.marginals is not None:
            row.update({f"ipw_{k}": v for k, v in self.marginals.as_row().items()})
        if self.feasibility is not None:
            f = self.feasibility
            row.update({
                "piu_bound_ok": f.piu_bound_ok,
                "fio_ok": f.fio_ok,
                "point_worst_piu": f.point_worst_piu,
                "piu_region_worst_piu": f.piu_region_worst_piu,
                "fio_region_worst_piu": f.fio_region_worst_piu,
            })
        return row


def accuracy(classifier, data) -> float:
    """Share of rows where the 0.5-threshold decision equals the label."""
    if len(data) == 0:
        raise ValueError("Accuracy of an empty test set is undefined")
    X = data.frame[list(classifier.features)].to_numpy(dtype=float)
    return float(np.mean(classifier.decide(X) == data.y))


def test_set_bound(k: int, n: int, delta: float = 0.05) -> tuple[float, float]:
    """
    Binomial-tail interval on the true error rate from k test errors out of n.

    Each tail gets δ: the lower end l solves P(X ≤ k; l) = 1 − δ and the
    upper end u solves P(X ≤ k; u) = δ for X ~ Binomial(n, ·).
    """
    if not 0 <= k <= n or n < 1:
        raise ValueError(f"Need 0 ≤ k ≤ n and n ≥ 1, got k={k}, n={n}")
    if not 0 < delta < 1:
        raise ValueError(f"δ must lie in (0, 1), got {delta}")
    if k == 0:
        lower = 0.0
    elif k == n:
        lower = delta ** (1.0 / n)
    else:
        lower = bisect(lambda p: binom.cdf(k, n, p) - (1 - delta), 0.0, 1.0, xtol=1e-12)
    if k == n:
        upper = 1.0
    else:
        upper = bisect(lambda p: binom.cdf(k, n, p) - delta, 0.0, 1.0, xtol=1e-12)
    return float(lower), float(upper)


# not a test
test_set_bound.__test__ = False


def feasibility_check(m: MarginalEstimates, delta: float, delta_prime: float) -> FeasibilityResult:
    """
    Compare the PIU-bound constraint 2·mismatch ≤ δ with the FIO constraint |p1 − p0| ≤ δ′.

    The worst PIU of each region is the largest feasible-range upper end
    over a grid of marginal pairs satisfying that constraint.
    """
    grid = np.linspace(0.0, 1.0, FEASIBILITY_GRID)
    p0, p1 = np.meshgrid(grid, grid, indexing="ij")
    tight = np.minimum(p1, 1 - p0) + np.minimum(p0, 1 - p1)
    bound = 2 * (p1 * (1 - p0) + (1 - p1) * p0)
    in_piu = bound <= delta
    in_fio = np.abs(p1 - p0) <= delta_prime
    return FeasibilityResult(
        delta=delta,
        delta_prime=delta_prime,
        piu_bound_ok=bool(piu_upper_bound(m) <= delta),
        fio_ok=bool(abs(m.p1 - m.p0) <= delta_prime),
        point_worst_piu=piu_feasible_range(m)[1],
        piu_region_worst_piu=float(tight[in_piu].max()) if in_piu.any() else float("nan"),
        fio_region_worst_piu=float(tight[in_fio].max()) if in_fio.any() else float("nan"),
    )


def is_structurally_fair(classifier, graph: CausalGraph, pi: PathwaySet, data) -> bool:
    """
    True when the classifier's mask removes every input that differs between
    the two potential-outcome worlds: features joined to Y by an edge of π.
    """
    if not classifier.mask:
        return False
    y = graph.outcome
    differing = [f for f in graph.features if (f, y) in pi.edges]
    columns = data.columns_for(differing) if differing else []
    return set(columns) <= set(classifier.mask)


def _stat_a_stderr(data, classifier, recipe: WeightRecipe, propensities: RecipePropensities) -> float:
    """Standard error of the IPW mean unfair effect from its per-row contributions."""
    w, w_prime = ipw_weights(recipe, propensities, data.frame)
    k0, k1 = ipw_coefficients(data.a, w, w_prime)
    c = classifier.predict_proba(data.frame[list(classifier.features)].to_numpy(dtype=float))
    contributions = len(data) * (k1 - k0) * c
    return float(contributions.std(ddof=1) / np.sqrt(len(data)))


def _check_structural(report: FairnessReport, se: float | None) -> dict:
    """
    Cross-check a structurally fair classifier's computed statistics.

    Oracle values must be exactly zero; the IPW mean effect must lie within
    STRUCTURAL_SE_TOLERANCE standard errors of zero.

    Raises:
        RuntimeError: If an oracle statistic is nonzero
    """
    computed = {s: getattr(report, s) for s in STATS}
    for s in ("stat_b", "stat_d"):
        if computed[s] is not None and computed[s] != 0.0:
            raise RuntimeError(f"Structurally fair classifier has nonzero oracle {s}={computed[s]:.6g}")
    if computed["stat_a"] is not None and se is not None:
        computed["stat_a_stderr"] = se
        if abs(computed["stat_a"]) > STRUCTURAL_SE_TOLERANCE * se:
            logger.warning("IPW mean effect %.4f of a structurally fair classifier exceeds %d standard errors (%.4f)",
                           computed["stat_a"], STRUCTURAL_SE_TOLERANCE, se)
    return computed


def evaluate(classifier, test, graph: CausalGraph, pi: PathwaySet, recipe: WeightRecipe | None,
             propensities: RecipePropensities | None, sem: Sem | None = None, seed: int = 0,
             config: EvaluationConfig = EvaluationConfig()) -> FairnessReport:
    """
    Build a FairnessReport on test data.

    Statistics a and c come from IPW marginals on the test rows; b and d
    need the generating SEM and are flagged unavailable without one. A
    classifier that masks every π-affected input reports structural zeros;
    the computed values are kept in `structural_check`.
    """
    acc = accuracy(classifier, test)
    errors = int(round((1 - acc) * len(test)))
    error_bound = test_set_bound(errors, len(test), config.delta)

    report = FairnessReport(
        accuracy=acc, stat_a=None, stat_b=None, stat_c=None, stat_d=None,
        feasible_lower=None, feasible_upper=None,
        provenance={s: UNAVAILABLE for s in STATS},
        errors=errors, n=len(test), error_bound=error_bound,
    )

    se = None
    if recipe is not None and propensities is not None:
        m = ipw_marginals(test, classifier, recipe, propensities)
        report.marginals = m
        report.stat_a = m.p1 - m.p0
        report.stat_c = piu_upper_bound(m)
        report.feasible_lower, report.feasible_upper = piu_feasible_range(m)
        report.provenance.update(stat_a=ESTIMATED, stat_c=ESTIMATED)
        if config.feasibility is not None:
            report.feasibility = feasibility_check(m, *config.feasibility)
        se = _stat_a_stderr(test, classifier, recipe, propensities)

    if sem is not None:
        est = oracle_piu(sem, classifier, pi, config.oracle_n, derive_seed(seed, "oracle"),
                         stochastic=config.stochastic, workers=config.workers)
        report.stat_d = est.value
        report.oracle_stderr = est.stderr
        report.stat_b = oracle_conditional_mean_std(
            sem, classifier, pi, config.oracle_n, derive_seed(seed, "oracle"),
            grouping=Grouping(decimals=config.rounding), stochastic=config.stochastic,
            workers=config.workers,
        )
        report.provenance.update(stat_b=ORACLE, stat_d=ORACLE)

    if is_structurally_fair(classifier, graph, pi, test):
        logger.info("Classifier masks every π-affected input; statistics are structurally zero")
        report.structural_check = _check_structural(report, se)
        report.stat_a = report.stat_b = report.stat_c = report.stat_d = 0.0
        report.feasible_lower = report.feasible_upper = 0.0
        report.provenance = {s: STRUCTURAL for s in STATS}
    return report


def reports_frame(reports: dict) -> pd.DataFrame:
    """One row per labelled report."""
    return pd.DataFrame([{"method": label, **r.as_row()} for label, r in reports.items()])


def write_reports_csv(reports: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_csv(path, index=False)


def _fmt(value, provenance):
    if value is None:
        return "n/a"
    mark = {"oracle": "*", "structural": "†"}.get(provenance, "")
    return f"{value:.4f}{mark}"


def format_reports(reports: dict) -> str:
    """Fixed-width table; * marks oracle values, † structural zeros."""
    lines = [
        f"{'Method':<16}| {'Acc':>7} | {'(a) mean':>9} | {'(b) std':>9} | {'(c) bound':>9} | {'(d) PIU':>9} | {'error 95% bound':>17}",
        "-" * 96,
    ]
    for label, r in reports.items():
        p = r.provenance
        bound = f"[{r.error_bound[0]:.3f}, {r.error_bound[1]:.3f}]" if r.error_bound else "n/a"
        lines.append(
            f"{label:<16}| {r.accuracy:>7.1%} | {_fmt(r.stat_a, p.get('stat_a')):>9} | "
            f"{_fmt(r.stat_b, p.get('stat_b')):>9} | {_fmt(r.stat_c, p.get('stat_c')):>9} | "
            f"{_fmt(r.stat_d, p.get('stat_d')):>9} | {bound:>17}"
        )
    return "\n".join(lines)


def summarize_generations(frame: pd.DataFrame, columns=("accuracy", *STATS)) -> pd.DataFrame:
    """Mean and std (ddof=1) per method over repeated data generations."""
    present = [c for c in columns if c in frame.columns]
    numeric = frame[["method", *present]].copy()
    numeric[present] = numeric[present].apply(pd.to_numeric, errors="coerce")
    grouped = numeric.groupby("method", sort=False)[present]
    summary = grouped.agg(["mean", "std"])
    summary.columns = [f"{col}_{agg}" for col, agg in summary.columns]
    summary["generations"] = grouped.size()
    return summary.reset_index()


def format_generation_summary(summary: pd.DataFrame) -> str:
    """Method | accuracy (%) | statistics, each as mean ± std."""
    lines = [
        f"{'Method':<16}| {'Acc (%)':>13} | {'(a)':>15} | {'(b)':>15} | {'(c)':>15} | {'(d)':>15} |",
        "-" * 104,
    ]
    for _, row in summary.iterrows():
        cells = [f"{100 * row['accuracy_mean']:.1f} ± {100 * _nan0(row['accuracy_std']):.1f}"]
        for s in STATS:
            mean = row.get(f"{s}_mean")
            cells.append("n/a" if pd.isna(mean) else f"{mean:.3f} ± {_nan0(row[f'{s}_std']):.3f}")
        lines.append(f"{row['method']:<16}| {cells[0]:>13} | " + " | ".join(f"{c:>15}" for c in cells[1:]) + " |")
    return "\n".join(lines)


def _nan0(x):
    return 0.0 if pd.isna(x) else float(x)
