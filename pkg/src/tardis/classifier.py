"""Binary logistic-regression distribution classifier.

Maps a pooled feature vector to the probability that its sample is
out-of-distribution. Features are z-scored with training-set statistics
(zero-variance columns get unit scale); the objective is mean cross-entropy
plus an L2 penalty on the weights (bias unregularized):

    loss(w, b) = mean_i [ log(1 + exp(s_i)) - y_i * s_i ] + l2/2 * ||w||^2

with s = X_std w + b. Optimization is deterministic full-batch gradient
descent from a zero initialization with Armijo backtracking, so the loss is
non-increasing at every accepted step and retraining on permuted rows gives
the same model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import atomic_write_text
from .errors import ConfigError, DimensionMismatch, SingleClassTrainingSet

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-14


@dataclass
class TrainConfig:
    max_iter: int = 500
    learning_rate: float = 0.1      # initial step for each backtracking search
    l2_lambda: float | None = None  # None -> 1 / n_samples
    tol: float = 1e-6               # relative loss change at which to stop
    seed: int = 0                   # kept for config parity; the solver is deterministic

    def validate(self) -> None:
        if self.max_iter < 1 or self.learning_rate <= 0 or self.tol <= 0:
            raise ConfigError("max_iter, learning_rate and tol must be positive")
        if self.l2_lambda is not None and self.l2_lambda <= 0:
            raise ConfigError("l2_lambda must be positive (or None for 1/n)")


@dataclass
class ClassifierModel:
    weights: np.ndarray       # (F,)
    bias: float
    feature_mean: np.ndarray  # (F,)
    feature_std: np.ndarray   # (F,), entries > 0
    trained_on: str = "surrogate"  # "surrogate" | "oracle"
    threshold: float = 0.5
    loss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "trained_on": self.trained_on,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            feature_mean=np.asarray(d["feature_mean"], dtype=np.float64),
            feature_std=np.asarray(d["feature_std"], dtype=np.float64),
            trained_on=d.get("trained_on", "surrogate"),
            threshold=float(d.get("threshold", 0.5)),
        )

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClassifierModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def loss_and_grad(
    x: np.ndarray, y: np.ndarray, weights: np.ndarray, bias: float, l2_lambda: float
) -> tuple[float, np.ndarray, float]:
    """Regularized mean cross-entropy and its analytic gradient."""
    s = x @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s) + 0.5 * l2_lambda * weights @ weights)
    r = _sigmoid(s) - y
    grad_w = x.T @ r / x.shape[0] + l2_lambda * weights
    grad_b = float(r.mean())
    return loss, grad_w, grad_b


def train(
    x: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig | None = None,
    trained_on: str = "surrogate",
) -> ClassifierModel:
    """Fit the classifier on (n, F) features and 0/1 labels."""
    cfg = cfg or TrainConfig()
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected 2-D features, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise DimensionMismatch(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} rows")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all():
        raise ConfigError(f"labels must be 0/1, got values {classes}")
    if classes.size < 2:
        raise SingleClassTrainingSet("training set must contain both classes")
    n, f = x.shape
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (x - mean) / std
    l2 = cfg.l2_lambda if cfg.l2_lambda is not None else 1.0 / n

    weights = np.zeros(f)
    bias = 0.0
    loss, grad_w, grad_b = loss_and_grad(xs, y, weights, bias, l2)
    history = [loss]
    trial_step = cfg.learning_rate
    for _ in range(cfg.max_iter):
        grad_sq = float(grad_w @ grad_w + grad_b * grad_b)
        if grad_sq == 0.0:
            break
        step = trial_step
        while step >= _MIN_STEP:
            w_new = weights - step * grad_w
            b_new = bias - step * grad_b
            loss_new, gw_new, gb_new = loss_and_grad(xs, y, w_new, b_new, l2)
            if loss_new <= loss - _ARMIJO_C * step * grad_sq:
                break
            step *= 0.5
        else:
            break  # no step improves the loss: numerically converged
        trial_step = 2.0 * step  # warm-start the next backtracking search
        rel_change = (loss - loss_new) / max(abs(loss), 1e-12)
        weights, bias, loss, grad_w, grad_b = w_new, b_new, loss_new, gw_new, gb_new
        history.append(loss)
        if rel_change < cfg.tol:
            break
    return ClassifierModel(
        weights=weights,
        bias=bias,
        feature_mean=mean,
        feature_std=std,
        trained_on=trained_on,
        loss_history=history,
    )


def _logits(model: ClassifierModel, z: np.ndarray) -> np.ndarray:
    zs = (z - model.feature_mean) / model.feature_std
    return zs @ model.weights + model.bias


def predict_proba(model: ClassifierModel, z: np.ndarray):
    """OOD probability for one feature vector or an (n, F) batch."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zz = z[None, :] if single else z
    if zz.ndim != 2 or zz.shape[1] != model.feature_dim:
        raise DimensionMismatch(
            f"expected feature dim {model.feature_dim}, got shape {z.shape}"
        )
    p = _sigmoid(_logits(model, zz))
    return float(p[0]) if single else p


def predict_label(model: ClassifierModel, z: np.ndarray):
    """1 (OOD) iff predict_proba >= model.threshold."""
    p = predict_proba(model, z)
    if isinstance(p, float):
        return int(p >= model.threshold)
    return (p >= model.threshold).astype(np.int64)


def gradient_check(
    x: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    bias: float = 0.0,
    l2_lambda: float = 0.0,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Meant for small instances; the finite-difference sweep is O(F) loss
    evaluations.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w = np.zeros(x.shape[1]) if weights is None else np.asarray(weights, dtype=np.float64)
    _, grad_w, grad_b = loss_and_grad(x, y, w, bias, l2_lambda)
    analytic = np.append(grad_w, grad_b)
    numeric = np.empty_like(analytic)

    def loss_at(wv, bv):
        return loss_and_grad(x, y, wv, bv, l2_lambda)[0]

    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = step
        numeric[i] = (loss_at(w + e, bias) - loss_at(w - e, bias)) / (2 * step)
    numeric[-1] = (loss_at(w, bias + step) - loss_at(w, bias - step)) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
