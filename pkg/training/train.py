"""Penalised objective and the minibatch momentum-SGD loop."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from estimation.ipw import EmptyStratumError
from training.model import DEFAULT_HIDDEN, KINDS, Classifier, NumericalError, init_classifier, loss_and_grad
from training.penalties import PENALTY_KINDS, Penalty
from utils.config_utils import derive_seed

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["epoch", "loss", "penalty", "p0", "p1", "full_penalty", "skipped_batches"]
TIMING_COLUMNS = ["epoch", "wall_time"]


class TrainingDivergedError(RuntimeError):
    """Raised on a non-finite objective; carries the last finite classifier."""

    def __init__(self, epoch: int, last_good: Classifier):
        self.epoch = epoch
        self.last_good = last_good
        super().__init__(f"Objective became non-finite in epoch {epoch}")


@dataclass(frozen=True)
class TrainConfig:
    penalty: str = "none"
    lam: float = 0.0
    epochs: int = 1000
    batch_size: int = 1000
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    model: str = "mlp"
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    remove: tuple[str, ...] = ()
    clamp_marginals: bool = False
    oracle_pairs: int = 1000

    def __post_init__(self):
        if self.penalty not in PENALTY_KINDS:
            raise ValueError(f"Unknown penalty kind: {self.penalty}. Use one of {list(PENALTY_KINDS)}")
        if self.model not in KINDS:
            raise ValueError(f"Unknown model kind: {self.model}. Use one of {list(KINDS)}")
        if self.lam < 0:
            raise ValueError(f"λ must be non-negative, got {self.lam}")
        if self.batch_size < 1:
            raise ValueError(f"Minibatch size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"Epochs must be non-negative, got {self.epochs}")
        if self.remove and self.penalty != "none":
            raise ValueError("A remove-mask is only allowed with penalty 'none'")

    @property
    def active(self) -> bool:
        return self.penalty != "none" and self.lam > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["remove"] = list(self.remove)
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(payload) - set(known))
        if unknown:
            raise ValueError(f"Unknown train config keys: {unknown}")
        for key in ("hidden", "remove"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass(frozen=True)
class Objective:
    value: float
    grad: np.ndarray
    loss: float
    penalty: float
    p0: float
    p1: float


@dataclass
class TrainResult:
    classifier: Classifier
    trace: pd.DataFrame = field(repr=False)
    # wall-clock seconds per epoch; the trace itself carries no timing
    timing: pd.DataFrame = field(default=None, repr=False)


def _column_means(stats):
    if not stats:
        return [float("nan")] * 4
    table = np.array(stats, dtype=float)
    return [float(col[~np.isnan(col)].mean()) if (~np.isnan(col)).any() else float("nan") for col in table.T]


def objective_and_grad(clf: Classifier, X: np.ndarray, y: np.ndarray, config: TrainConfig,
                       penalty: Penalty, idx: np.ndarray | None = None, step: int = 0) -> Objective:
    """
    Mean cross-entropy on the batch plus λ·G(θ), with G estimated over the same batch rows.

    Args:
        clf: Current classifier
        X, y: Batch inputs and labels
        config: Supplies λ
        penalty: Penalty evaluator (frozen propensities, grid or SEM)
        idx: Row indices of the batch into the penalty's training arrays
        step: Global step counter (seeds the oracle penalty's fresh draws)
    """
    loss, grad = loss_and_grad(clf, X, y)
    if not config.active:
        return Objective(loss, grad, loss, 0.0, float("nan"), float("nan"))
    pv = penalty.evaluate(clf, idx, step)
    return Objective(
        value=loss + config.lam * pv.value,
        grad=grad + config.lam * pv.grad,
        loss=loss,
        penalty=pv.value,
        p0=pv.p0,
        p1=pv.p1,
    )


def sgd_train(X: np.ndarray, y: np.ndarray, features, config: TrainConfig,
              penalty: Penalty | None = None, classifier: Classifier | None = None,
              progress: bool = False) -> TrainResult:
    """
    Momentum SGD over shuffled minibatches: v ← μv + g, θ ← θ − lr·v.

    Args:
        X, y: Training inputs and labels (rows aligned with the penalty's arrays)
        features: Column names of X
        config: Training hyperparameters
        penalty: Fairness penalty evaluator (None for unpenalised training)
        classifier: Starting point; a fresh seeded classifier when None
        progress: Show a tqdm bar over epochs

    Returns:
        TrainResult with the final classifier, a per-epoch trace and per-epoch wall-clock timing

    Raises:
        TrainingDivergedError: If the objective or its gradient becomes non-finite
    """
    penalty = penalty if (penalty is not None and config.active) else Penalty()
    clf = classifier or init_classifier(
        config.model, features, derive_seed(config.seed, "init"),
        hidden=config.hidden, X_train=X, mask=config.remove,
    )
    rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    n = len(y)
    theta = clf.theta.copy()
    velocity = np.zeros_like(theta)
    rows, timing = [], []
    start = time.perf_counter()
    step = 0

    for epoch in tqdm(range(config.epochs), desc="Training", disable=not progress):
        order = rng.permutation(n)
        stats, skipped = [], 0
        for begin in range(0, n, config.batch_size):
            idx = order[begin:begin + config.batch_size]
            current = clf.with_theta(theta)
            try:
                obj = objective_and_grad(current, X[idx], y[idx], config, penalty, idx, step)
            except EmptyStratumError:
                logger.warning("Epoch %d: skipping a minibatch without both A strata", epoch)
                skipped += 1
                continue
            except NumericalError:
                raise TrainingDivergedError(epoch, current) from None
            finally:
                step += 1
            if not (np.isfinite(obj.value) and np.all(np.isfinite(obj.grad))):
                raise TrainingDivergedError(epoch, current)
            velocity = config.momentum * velocity + obj.grad
            theta = theta - config.lr * velocity
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError(epoch, current)
            stats.append((obj.loss, obj.penalty, obj.p0, obj.p1))

        current = clf.with_theta(theta)
        means = _column_means(stats)
        full = penalty.full_value(current).value if config.active else 0.0
        rows.append({
            "epoch": epoch + 1,
            "loss": float(means[0]),
            "penalty": float(means[1]),
            "p0": float(means[2]),
            "p1": float(means[3]),
            "full_penalty": float(full),
            "skipped_batches": skipped,
        })
        timing.append({"epoch": epoch + 1, "wall_time": time.perf_counter() - start})

    return TrainResult(classifier=clf.with_theta(theta), trace=pd.DataFrame(rows, columns=TRACE_COLUMNS),
                       timing=pd.DataFrame(timing, columns=TIMING_COLUMNS))
