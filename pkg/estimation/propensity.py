"""
Propensity models P(A=1 | conditioning columns) fit on training data.

Logistic regression with a small L2 penalty on standardised polynomial
features of the conditioning columns (degree 2 by default, so that products
such as Q·M enter the model), clipped into [clip, 1 - clip] so that every
IPW weight stays finite.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit, logit
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import PolynomialFeatures, StandardScaler

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT = "piu-propensity"
ARTIFACT_VERSION = 2


@dataclass(frozen=True)
class PropensityConfig:
    clip: float = 1e-3
    l2: float = 1e-4
    seed: int = 0
    max_iter: int = 1000
    degree: int = 2

    def __post_init__(self):
        if not 0.0 < self.clip < 0.5:
            raise ValueError(f"Propensity clip must lie in (0, 0.5), got {self.clip}")
        if self.l2 <= 0:
            raise ValueError(f"Propensity l2 must be positive, got {self.l2}")
        if self.degree < 1:
            raise ValueError(f"Propensity degree must be at least 1, got {self.degree}")


def _expand(Z: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of the standardised columns up to `degree`, without the constant."""
    if degree == 1:
        return Z
    return PolynomialFeatures(degree, include_bias=False).fit_transform(Z)


@dataclass(frozen=True)
class PropensityModel:
    """
    Fitted scorer for P(A=1 | columns); an empty `columns` tuple means the marginal P(A=1).

    Rows are standardised with (mean, scale), expanded to monomials up to
    `degree`, standardised again with (poly_mean, poly_scale) and scored
    linearly.
    """
    columns: tuple[str, ...]
    coef: np.ndarray = field(repr=False)
    intercept: float
    mean: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    clip: float = 1e-3
    degree: int = 1
    poly_mean: np.ndarray | None = field(default=None, repr=False)
    poly_scale: np.ndarray | None = field(default=None, repr=False)

    def features(self, X: np.ndarray) -> np.ndarray:
        P = _expand((X - self.mean) / self.scale, self.degree)
        if self.poly_mean is not None:
            P = (P - self.poly_mean) / self.poly_scale
        return P

    def score(self, X: np.ndarray) -> np.ndarray:
        if not self.columns:
            return np.full(len(X), self.intercept)
        return self.features(X) @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "columns": list(self.columns),
            "degree": self.degree,
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "poly_mean": None if self.poly_mean is None else self.poly_mean.tolist(),
            "poly_scale": None if self.poly_scale is None else self.poly_scale.tolist(),
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PropensityModel":
        if payload.get("format") != ARTIFACT_FORMAT or payload.get("version") != ARTIFACT_VERSION:
            raise ValueError(
                f"Not a version-{ARTIFACT_VERSION} propensity artifact: "
                f"format={payload.get('format')!r}, version={payload.get('version')!r}"
            )
        optional = {k: None if payload.get(k) is None else np.asarray(payload[k], dtype=float)
                    for k in ("poly_mean", "poly_scale")}
        return cls(
            columns=tuple(payload["columns"]),
            coef=np.asarray(payload["coef"], dtype=float),
            intercept=float(payload["intercept"]),
            mean=np.asarray(payload["mean"], dtype=float),
            scale=np.asarray(payload["scale"], dtype=float),
            clip=float(payload["clip"]),
            degree=int(payload["degree"]),
            **optional,
        )


def _matrix(frame: pd.DataFrame, columns) -> np.ndarray:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValueError(f"Missing conditioning column(s): {missing}")
    return frame[list(columns)].to_numpy(dtype=float)


def fit_propensity(frame: pd.DataFrame, sensitive: str, conditioning,
                   config: PropensityConfig = PropensityConfig()) -> PropensityModel:
    """
    Fit P(A=1 | conditioning) by L2-regularised maximum likelihood.

    Args:
        frame: Training data with a binary sensitive column
        sensitive: Name of the sensitive column A
        conditioning: Column names to condition on (may be empty)
        config: Clip floor, L2 strength, polynomial degree, seed

    Returns:
        Immutable PropensityModel

    Raises:
        ValueError: If A is missing, not binary, or takes a single value
    """
    if sensitive not in frame.columns:
        raise ValueError(f"Missing sensitive column '{sensitive}'")
    a = frame[sensitive].to_numpy(dtype=float)
    values = set(np.unique(a).tolist())
    if not values <= {0.0, 1.0}:
        raise ValueError(f"Sensitive column '{sensitive}' must be binary, found values {sorted(values)}")
    if len(values) < 2:
        raise ValueError(f"Sensitive column '{sensitive}' has a single class; cannot fit a propensity model")

    columns = tuple(conditioning)
    if not columns:
        p = float(np.clip(a.mean(), config.clip, 1 - config.clip))
        return PropensityModel(columns=(), coef=np.zeros(0), intercept=float(logit(p)),
                               mean=np.zeros(0), scale=np.ones(0), clip=config.clip)

    X = _matrix(frame, columns)
    scaler = StandardScaler().fit(X)
    P = _expand(scaler.transform(X), config.degree)
    poly_scaler = StandardScaler().fit(P) if config.degree > 1 else None
    if poly_scaler is not None:
        P = poly_scaler.transform(P)
    clf = LogisticRegression(
        C=1.0 / (config.l2 * len(a)),
        solver="lbfgs",
        max_iter=config.max_iter,
        random_state=config.seed,
    )
    clf.fit(P, a.astype(int))
    logger.debug("Fitted degree-%d propensity on %s (n=%d, %d terms)", config.degree, list(columns),
                 len(a), P.shape[1])
    return PropensityModel(
        columns=columns,
        coef=clf.coef_.ravel().astype(float),
        intercept=float(clf.intercept_[0]),
        mean=scaler.mean_.astype(float),
        scale=scaler.scale_.astype(float),
        clip=config.clip,
        degree=config.degree,
        poly_mean=None if poly_scaler is None else poly_scaler.mean_.astype(float),
        poly_scale=None if poly_scaler is None else poly_scaler.scale_.astype(float),
    )


def predict_propensity(model: PropensityModel, rows: pd.DataFrame | dict) -> np.ndarray:
    """
    P(A=1 | row) for each row, clipped into [clip, 1 - clip].

    P(A=0 | row) is 1 minus this value.
    """
    if isinstance(rows, dict):
        rows = pd.DataFrame({k: np.atleast_1d(v) for k, v in rows.items()})
    X = _matrix(rows, model.columns) if model.columns else np.zeros((len(rows), 0))
    return np.clip(expit(model.score(X)), model.clip, 1 - model.clip)


def save_propensity(model: PropensityModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=2)


def load_propensity(path: str | Path) -> PropensityModel:
    with open(path) as f:
        return PropensityModel.from_dict(json.load(f))
