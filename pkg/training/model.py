"""
Binary classifiers c(x) = P(Y=1 | x) with analytic gradients.

Two kinds share one parameter layout convention (flat θ):
    logreg  s = w·z + b
    mlp     z → sigmoid(100) → sigmoid(50) → 2 logits → log-softmax,
            s = logit_1 − logit_0
with c = sigmoid(s). Inputs are standardised with training-split statistics
and masked columns are zeroed after standardisation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax
from sklearn.preprocessing import StandardScaler

KINDS = ("logreg", "mlp")
DEFAULT_HIDDEN = (100, 50)
CHECKPOINT_FORMAT = "piu-classifier"
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    """Raised when activations or losses become non-finite."""


def _layer_shapes(kind, d, hidden):
    if kind == "logreg":
        return [(1, d)]
    widths = [d, *hidden, 2]
    return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]


def n_params(kind: str, d: int, hidden=DEFAULT_HIDDEN) -> int:
    return sum(out * (inp + 1) for out, inp in _layer_shapes(kind, d, hidden))


@dataclass(frozen=True)
class Classifier:
    kind: str
    theta: np.ndarray = field(repr=False)
    features: tuple[str, ...]
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    shift: np.ndarray | None = field(default=None, repr=False)
    scale: np.ndarray | None = field(default=None, repr=False)
    mask: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown classifier kind: {self.kind}. Use one of {list(KINDS)}")
        d = len(self.features)
        expected = n_params(self.kind, d, self.hidden)
        if self.theta.shape != (expected,):
            raise ValueError(f"{self.kind} over {d} inputs needs {expected} parameters, got {self.theta.shape}")
        unknown = [m for m in self.mask if m not in self.features]
        if unknown:
            raise ValueError(f"Masked columns {unknown} are not classifier features")

    @property
    def d(self) -> int:
        return len(self.features)

    def with_theta(self, theta: np.ndarray) -> "Classifier":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)

    def decide(self, X: np.ndarray) -> np.ndarray:
        return (forward(self, X) >= 0.5).astype(int)


def _unpack(clf: Classifier):
    layers, offset = [], 0
    for out, inp in _layer_shapes(clf.kind, clf.d, clf.hidden):
        W = clf.theta[offset:offset + out * inp].reshape(out, inp)
        offset += out * inp
        b = clf.theta[offset:offset + out]
        offset += out
        layers.append((W, b))
    return layers


def _prepare(clf: Classifier, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != clf.d:
        raise ValueError(f"Input width {X.shape[1]} does not match classifier width {clf.d}")
    Z = X
    if clf.shift is not None:
        Z = (X - clf.shift) / clf.scale
    if clf.mask:
        Z = Z.copy()
        Z[:, [clf.features.index(m) for m in clf.mask]] = 0.0
    return Z


def _activations(clf: Classifier, Z):
    """Returns (score s, hidden activations) for prepared inputs."""
    layers = _unpack(clf)
    if clf.kind == "logreg":
        W, b = layers[0]
        return Z @ W[0] + b[0], []
    acts = [Z]
    h = Z
    for W, b in layers[:-1]:
        h = expit(h @ W.T + b)
        acts.append(h)
    W, b = layers[-1]
    logits = h @ W.T + b
    logp = log_softmax(logits, axis=1)
    return logp[:, 1] - logp[:, 0], acts


def _vjp(clf: Classifier, Z, acts, ds) -> np.ndarray:
    """Σ_i ds_i ∂s_i/∂θ by backpropagation."""
    layers = _unpack(clf)
    if clf.kind == "logreg":
        return np.concatenate([Z.T @ ds, [ds.sum()]])

    grads = []
    delta = ds[:, None] * np.array([-1.0, 1.0])
    for idx in range(len(layers) - 1, -1, -1):
        W, _b = layers[idx]
        inp = acts[idx]
        grads.append((delta.T @ inp, delta.sum(axis=0)))
        if idx > 0:
            delta = (delta @ W) * inp * (1.0 - inp)
    flat = []
    for gW, gb in reversed(grads):
        flat.extend([gW.ravel(), gb])
    return np.concatenate(flat)


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"Non-finite {what}")


def forward(clf: Classifier, X) -> np.ndarray:
    """c(x) for each row of X (a single vector is treated as one row)."""
    s, _ = _activations(clf, _prepare(clf, X))
    return expit(s)


def loss_and_grad(clf: Classifier, X, y) -> tuple[float, np.ndarray]:
    """
    Mean cross-entropy and its gradient.

    Args:
        clf: Classifier
        X: (n, d) batch
        y: (n,) labels in {0, 1}

    Returns:
        (loss, ∂loss/∂θ)
    """
    Z = _prepare(clf, X)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("Empty batch")
    s, acts = _activations(clf, Z)
    _check_finite(s, "classifier scores")
    loss = float(np.mean(y * np.logaddexp(0.0, -s) + (1.0 - y) * np.logaddexp(0.0, s)))
    ds = (expit(s) - y) / len(y)
    return loss, _vjp(clf, Z, acts, ds)


def forward_grad(clf: Classifier, x) -> np.ndarray:
    """∂c(x)/∂θ for a single input vector."""
    Z = _prepare(clf, x)
    if Z.shape[0] != 1:
        raise ValueError("forward_grad takes a single input; use forward_vjp for batches")
    s, acts = _activations(clf, Z)
    _check_finite(s, "classifier scores")
    c = expit(s)
    return _vjp(clf, Z, acts, c * (1.0 - c))


def forward_vjp(clf: Classifier, X, v) -> tuple[np.ndarray, np.ndarray]:
    """
    Outputs c(X) and Σ_i v_i ∂c(x_i)/∂θ.
    """
    Z = _prepare(clf, X)
    s, acts = _activations(clf, Z)
    _check_finite(s, "classifier scores")
    c = expit(s)
    return c, _vjp(clf, Z, acts, np.asarray(v, dtype=float) * c * (1.0 - c))


def init_classifier(kind: str, features, seed: int, hidden=DEFAULT_HIDDEN, X_train=None,
                    mask=()) -> Classifier:
    """
    Fresh classifier with uniform(±1/√fan_in) weights and biases.

    Args:
        kind: "logreg" or "mlp"
        features: Input column names, in order
        seed: Initialisation seed
        hidden: MLP hidden widths
        X_train: Training inputs used for standardisation (None: no scaling)
        mask: Columns zero-projected before the forward pass
    """
    if kind not in KINDS:
        raise ValueError(f"Unknown classifier kind: {kind}. Use one of {list(KINDS)}")
    features = tuple(features)
    hidden = tuple(hidden) if kind == "mlp" else ()
    rng = np.random.default_rng(seed)
    parts = []
    for out, inp in _layer_shapes(kind, len(features), hidden):
        bound = 1.0 / np.sqrt(inp)
        parts.append(rng.uniform(-bound, bound, out * inp))
        parts.append(rng.uniform(-bound, bound, out))
    shift = scale = None
    if X_train is not None:
        scaler = StandardScaler().fit(np.asarray(X_train, dtype=float))
        shift, scale = scaler.mean_.astype(float), scaler.scale_.astype(float)
    return Classifier(kind=kind, theta=np.concatenate(parts), features=features, hidden=hidden,
                      shift=shift, scale=scale, mask=tuple(mask))


def zeros_like(clf: Classifier) -> Classifier:
    return clf.with_theta(np.zeros_like(clf.theta))


def to_dict(clf: Classifier) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": clf.kind,
        "features": list(clf.features),
        "hidden": list(clf.hidden),
        "mask": list(clf.mask),
        "shift": None if clf.shift is None else clf.shift.tolist(),
        "scale": None if clf.scale is None else clf.scale.tolist(),
        "theta": clf.theta.tolist(),
    }


def _optional_array(values):
    return None if values is None else np.asarray(values, dtype=float)


def from_dict(payload: dict) -> Classifier:
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"Not a version-{CHECKPOINT_VERSION} classifier checkpoint: "
            f"format={payload.get('format')!r}, version={payload.get('version')!r}"
        )
    return Classifier(
        kind=payload["kind"],
        theta=np.asarray(payload["theta"], dtype=float),
        features=tuple(payload["features"]),
        hidden=tuple(payload["hidden"]),
        shift=_optional_array(payload["shift"]),
        scale=_optional_array(payload["scale"]),
        mask=tuple(payload["mask"]),
    )


def save_checkpoint(clf: Classifier, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(to_dict(clf), f)


def load_checkpoint(path: str | Path) -> Classifier:
    with open(path) as f:
        return from_dict(json.load(f))
