"""
Training regimes and penalty-parameter selection.

A regime fixes the penalty kind (and the Remove mask); λ comes from the
caller or from a validation grid search:

    unconstrained  no penalty
    remove         no penalty, A and every π-node column masked out
    proposed       PIU upper bound on IPW marginals
    fio            |p1 − p0| on IPW marginals
    latent         interval bound under a latent confounder
    oracle         true PIU under the generating SEM
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from causal.graph import CausalGraph, PathwaySet, require_admissible
from causal.presets import get_preset
from causal.sem import Sem, oracle_piu
from estimation.bounds import latent_bounds, latent_grid, piu_upper_bound
from estimation.ipw import (
    RecipePropensities,
    UnsupportedGraphError,
    WeightRecipe,
    fit_recipe_propensities,
    ipw_marginals,
    ipw_weights,
    recipe_from_graph,
)
from estimation.propensity import PropensityConfig
from evaluation.metrics import accuracy
from training.penalties import IpwPenalty, LatentPenalty, OraclePenalty, Penalty, penalty_latent
from training.train import TrainConfig, TrainResult, sgd_train
from utils.config_utils import EvaluationConfig, ExperimentConfig, SelectionConfig, derive_seed, load_graph_config
from utils.data_utils import Dataset, Schema, load_split, split, synth_preset

logger = logging.getLogger(__name__)

REGIME_PENALTY = {
    "unconstrained": "none",
    "remove": "none",
    "proposed": "piu-ub",
    "fio": "fio",
    "latent": "piu-ub-latent",
    "oracle": "piu-oracle",
}
REGIMES = tuple(REGIME_PENALTY)
IPW_PENALTIES = ("piu-ub", "fio")


@dataclass
class TrainingContext:
    """Everything frozen before SGD starts: data, graph, π, weight recipe, propensities, SEM."""
    graph: CausalGraph
    pi: PathwaySet
    train: Dataset
    recipe: WeightRecipe | None = None
    propensities: RecipePropensities | None = None
    sem: Sem | None = None
    recipe_error: str | None = None
    r_bins: int = 10

    def restrict(self, index) -> "TrainingContext":
        """Same frozen propensities over a subset of the training rows."""
        return replace(self, train=self.train.subset(index))


@dataclass
class RegimeResult:
    regime: str
    config: TrainConfig
    result: TrainResult
    selection: pd.DataFrame | None = field(default=None, repr=False)

    @property
    def classifier(self):
        return self.result.classifier


def prepare_context(train: Dataset, graph: CausalGraph, pi: PathwaySet, sem: Sem | None = None,
                    propensity: PropensityConfig = PropensityConfig(),
                    propensities: RecipePropensities | None = None, r_bins: int = 10) -> TrainingContext:
    """
    Check the graph and π, derive the weight recipe and fit (or reuse) its propensities.

    Graphs outside the weight-recipe family are still usable by penalties that
    need no IPW weights; the reason is kept and raised if an IPW penalty is requested.

    Raises:
        GraphValidationError: If the graph or π is invalid
        RecantingWitnessError: If π has a recanting witness
    """
    require_admissible(graph, pi)
    ctx = TrainingContext(graph=graph, pi=pi, train=train, sem=sem, r_bins=r_bins)
    try:
        ctx.recipe = recipe_from_graph(graph, pi)
    except UnsupportedGraphError as e:
        logger.warning("No IPW weight recipe: %s", e)
        ctx.recipe_error = str(e)
        return ctx
    ctx.propensities = propensities or fit_recipe_propensities(train, ctx.recipe, propensity)
    return ctx


def latent_roles(graph: CausalGraph) -> tuple[str, str]:
    """
    (mediator, covariate) for the latent-confounder bounds.

    The covariate is the one observed feature with a latent parent; the
    mediator is the one remaining feature besides A.
    """
    latent = set(graph.latent)
    others = [f for f in graph.features if f != graph.sensitive]
    confounded = [f for f in others if latent & set(graph.parents(f))]
    rest = [f for f in others if f not in confounded]
    if len(confounded) != 1 or len(rest) != 1:
        raise UnsupportedGraphError(
            "Latent-confounder bounds need exactly one latent-confounded covariate and one mediator; "
            f"got covariates {confounded} and mediators {rest}"
        )
    return rest[0], confounded[0]


def remove_mask(ctx: TrainingContext) -> tuple[str, ...]:
    """Columns of A and of every observed node on π."""
    nodes = [n for n in ctx.graph.features if n == ctx.graph.sensitive or n in ctx.pi.nodes]
    return tuple(ctx.train.columns_for(nodes))


def build_penalty(config: TrainConfig, ctx: TrainingContext) -> Penalty | None:
    """Penalty evaluator for a config over the context's training rows."""
    kind = config.penalty
    if kind == "none":
        return None
    data = ctx.train
    if kind in IPW_PENALTIES:
        if ctx.recipe is None:
            raise UnsupportedGraphError(ctx.recipe_error or "No IPW weight recipe for this graph")
        w, w_prime = ipw_weights(ctx.recipe, ctx.propensities, data.frame)
        return IpwPenalty(kind, data.X, data.a, w, w_prime, clamp=config.clamp_marginals)
    if kind == "piu-ub-latent":
        mediator, covariate = latent_roles(ctx.graph)
        return LatentPenalty(latent_grid(data, data.features, mediator, covariate, ctx.r_bins))
    if kind == "piu-oracle":
        if ctx.sem is None:
            raise ValueError("The oracle penalty needs the generating SEM; use a preset dataset")
        return OraclePenalty(ctx.sem, ctx.pi, data.features, derive_seed(config.seed, "oracle-penalty"),
                             n_pairs=config.oracle_pairs)
    raise ValueError(f"Unknown penalty kind: {kind}")


def train_config(ctx: TrainingContext, config: TrainConfig, progress: bool = False) -> TrainResult:
    return sgd_train(ctx.train.X, ctx.train.y, ctx.train.features, config,
                     penalty=build_penalty(config, ctx), progress=progress)


def selection_statistic(kind: str, classifier, data: Dataset, ctx: TrainingContext,
                        evaluation: EvaluationConfig, seed: int) -> float:
    """Fairness statistic a penalty kind is judged by on held-out rows."""
    if kind in ("none", *IPW_PENALTIES):
        m = ipw_marginals(data, classifier, ctx.recipe, ctx.propensities)
        return abs(m.p1 - m.p0) if kind == "fio" else piu_upper_bound(m)
    if kind == "piu-ub-latent":
        mediator, covariate = latent_roles(ctx.graph)
        intervals = latent_bounds(data, classifier, mediator, covariate, ctx.r_bins)
        return 2 * penalty_latent(intervals)[0]
    if kind == "piu-oracle":
        return oracle_piu(ctx.sem, classifier, ctx.pi, evaluation.oracle_n,
                          derive_seed(seed, "oracle"), workers=evaluation.workers).value
    raise ValueError(f"Unknown penalty kind: {kind}")


def select_lambda(ctx: TrainingContext, base: TrainConfig, selection: SelectionConfig = SelectionConfig(),
                  evaluation: EvaluationConfig = EvaluationConfig(),
                  progress: bool = False) -> tuple[float, pd.DataFrame]:
    """
    Grid-search λ on a validation split of the training rows.

    Picks the most accurate λ whose statistic stays within the ceiling;
    when none does, the λ with the lowest statistic.

    Returns:
        (chosen λ, table with one row per grid value)
    """
    fit_idx, val_idx = split_indices(len(ctx.train), selection.validation,
                                     derive_seed(base.seed, "selection"))
    fit_ctx, val = ctx.restrict(fit_idx), ctx.train.subset(val_idx)
    rows = []
    for lam in tqdm(selection.grid, desc=f"Selecting λ ({base.penalty})", disable=not progress):
        config = replace(base, lam=float(lam))
        clf = train_config(fit_ctx, config).classifier
        stat = selection_statistic(base.penalty, clf, val, ctx, evaluation, base.seed)
        rows.append({"lam": float(lam), "accuracy": accuracy(clf, val), "statistic": stat,
                     "within_ceiling": stat <= selection.ceiling})
    table = pd.DataFrame(rows)

    ok = table[table["within_ceiling"]]
    if len(ok):
        chosen = float(ok.loc[ok["accuracy"].idxmax(), "lam"])
    else:
        logger.warning("No λ keeps the %s statistic within %.3f; taking the lowest statistic",
                       base.penalty, selection.ceiling)
        chosen = float(table.loc[table["statistic"].idxmin(), "lam"])
    logger.info("Selected λ=%.2f for %s", chosen, base.penalty)
    return chosen, table


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def regime_config(regime: str, ctx: TrainingContext, base: TrainConfig, lam: float | None = None) -> TrainConfig:
    if regime not in REGIME_PENALTY:
        raise ValueError(f"Unknown regime: {regime}. Use one of {list(REGIMES)}")
    penalty = REGIME_PENALTY[regime]
    if penalty == "none":
        mask = remove_mask(ctx) if regime == "remove" else ()
        return replace(base, penalty="none", lam=0.0, remove=mask)
    return replace(base, penalty=penalty, lam=base.lam if lam is None else float(lam), remove=())


def run_regime(regime: str, ctx: TrainingContext, base: TrainConfig, lam: float | None = None,
               selection: SelectionConfig | None = None, evaluation: EvaluationConfig = EvaluationConfig(),
               progress: bool = False) -> RegimeResult:
    """
    Train one regime on the full training rows.

    Args:
        regime: One of REGIMES
        ctx: Frozen training context
        base: Hyperparameters shared by all regimes
        lam: Fixed λ (penalised regimes); overrides selection
        selection: Grid-search λ on a validation split when given and lam is None
        evaluation: Oracle sample size etc. for the selection statistic
    """
    config = regime_config(regime, ctx, base, lam)
    table = None
    if config.penalty != "none" and lam is None and selection is not None:
        chosen, table = select_lambda(ctx, config, selection, evaluation, progress)
        config = replace(config, lam=chosen)
    logger.info("Training regime %s (penalty=%s, λ=%.2f)", regime, config.penalty, config.lam)
    return RegimeResult(regime, config, train_config(ctx, config, progress), table)


@dataclass
class ExperimentData:
    train: Dataset
    test: Dataset
    graph: CausalGraph
    pi: PathwaySet
    sem: Sem | None = None


def load_experiment_data(config: ExperimentConfig) -> ExperimentData:
    """
    Training and test datasets, graph, π and (for presets) the generating SEM.

    Preset rows are sampled with the `data` seed and split with the `split`
    seed; CSV rows are encoded with training-split statistics.
    """
    ds = config.dataset
    seed = config.seed
    pi = None
    sem = None
    if "preset" in ds:
        preset = get_preset(ds["preset"])
        n_test = ds.get("n_test", 1000)
        data, sem = synth_preset(ds["preset"], int(ds.get("n", 6000)), derive_seed(seed, "data"))
        train, test = split(data, n_test, derive_seed(seed, "split"))
        graph, pi = preset.sem.graph, preset.pi
        if config.graph is not None:
            graph, pi = load_graph_config(config.graph)
            pi = pi or preset.pi
    else:
        schema = Schema.load(config.resolve_path(ds["schema"]))
        test_path = config.resolve_path(ds["test_csv"]) if ds.get("test_csv") else None
        train, test = load_split(config.resolve_path(ds["csv"]), schema, ds.get("n_test", 0.1),
                                 derive_seed(seed, "split"), test_path=test_path)
        graph, pi = load_graph_config(config.graph)
    if pi is None:
        raise ValueError("The graph config names no unfair pathways ('pathways' or 'unfair')")
    logger.info("Loaded %d training and %d test rows", len(train), len(test))
    return ExperimentData(train, test, graph, pi, sem)
