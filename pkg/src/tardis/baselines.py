"""Post-hoc scoring baselines operating on stored features or logits.

All scores follow the convention "higher means more OOD":

* max-softmax confidence: 1 - max softmax(logits);
* energy: -T * logsumexp(logits / T);
* Mahalanobis: minimum distance to per-class feature means under one
  covariance shared across classes (single Gaussian when no class labels).

The clustering-only ablation score lives in :mod:`tardis.clustering`
(``nearest_cluster_score``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierModel, predict_proba
from .clustering import ClusterModel, nearest_cluster_score
from .errors import (
    DimensionMismatch,
    InvalidTemperature,
    SingularCovariance,
    TooFewLogits,
    TooFewSamplesPerClass,
)
from .metrics import evaluate


def msp_score(logits) -> float:
    """1 - max softmax probability; 0 for a fully confident prediction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise TooFewLogits(f"need >= 2 logits, got shape {logits.shape}")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return float(1.0 - e.max() / e.sum())


def energy_score(logits, temperature: float = 1.0) -> float:
    """Free-energy OOD score: -T * logsumexp(logits / T)."""
    if temperature <= 0:
        raise InvalidTemperature(f"temperature must be > 0, got {temperature}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 1:
        raise TooFewLogits(f"need >= 1 logit, got shape {logits.shape}")
    scaled = logits / temperature
    m = scaled.max()
    return float(-temperature * (m + np.log(np.exp(scaled - m).sum())))


def score_logit_rows(logit_matrix, method: str, temperature: float = 1.0) -> np.ndarray:
    fn = {"msp": msp_score, "energy": lambda l: energy_score(l, temperature)}[method]
    logit_matrix = np.asarray(logit_matrix, dtype=np.float64)
    return np.asarray([fn(row) for row in logit_matrix])


@dataclass
class MahalanobisModel:
    class_means: dict          # class label -> (F,) mean
    covariance_inverse: np.ndarray  # (F, F), shared across classes
    epsilon: float = 1e-6

    @property
    def feature_dim(self) -> int:
        return self.covariance_inverse.shape[0]


def mahalanobis_fit(
    id_features: np.ndarray, class_labels=None, epsilon: float = 1e-6
) -> MahalanobisModel:
    """Per-class means plus one covariance pooled over all classes.

    Without class labels the whole ID set is one Gaussian. The covariance
    gets ``epsilon`` added to its diagonal before the Cholesky-based
    inversion.
    """
    x = np.asarray(id_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionMismatch(f"expected (n, F) features, got shape {x.shape}")
    labels = ["all"] * x.shape[0] if class_labels is None else list(class_labels)
    if len(labels) != x.shape[0]:
        raise DimensionMismatch(f"{len(labels)} class labels for {x.shape[0]} rows")
    means = {}
    centered = np.empty_like(x)
    for label in dict.fromkeys(labels):  # first-appearance order
        rows = np.asarray([l == label for l in labels])
        if rows.sum() < 2:
            raise TooFewSamplesPerClass(f"class {label!r} has {int(rows.sum())} samples")
        mu = x[rows].mean(axis=0)
        means[label] = mu
        centered[rows] = x[rows] - mu
    cov = centered.T @ centered / x.shape[0]
    cov[np.diag_indices_from(cov)] += epsilon
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"covariance not positive definite: {exc}") from exc
    eye = np.eye(cov.shape[0])
    inverse = np.linalg.solve(chol.T, np.linalg.solve(chol, eye))
    return MahalanobisModel(class_means=means, covariance_inverse=inverse, epsilon=epsilon)


def mahalanobis_score(model: MahalanobisModel, z) -> float:
    """Minimum-over-classes Mahalanobis distance; 0 at a class mean."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.feature_dim,):
        raise DimensionMismatch(f"expected shape ({model.feature_dim},), got {z.shape}")
    best = np.inf
    for mu in model.class_means.values():
        diff = z - mu
        d2 = diff @ model.covariance_inverse @ diff
        best = min(best, max(d2, 0.0))
    return float(np.sqrt(best))


def mahalanobis_score_rows(model: MahalanobisModel, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    d2 = np.full(rows.shape[0], np.inf)
    for mu in model.class_means.values():
        diff = rows - mu
        d2 = np.minimum(d2, np.einsum("ij,jk,ik->i", diff, model.covariance_inverse, diff))
    return np.sqrt(np.maximum(d2, 0.0))


@dataclass
class BaselineSuiteResult:
    reports: dict      # method name -> EvalReport
    scores: dict       # method name -> per-row scores
    skipped: dict      # method name -> reason


def run_baseline_suite(
    eval_features: np.ndarray,
    truth_labels: np.ndarray,
    g_model: ClassifierModel | None = None,
    cluster_model: ClusterModel | None = None,
    logits: np.ndarray | None = None,
    id_train_features: np.ndarray | None = None,
    id_class_labels=None,
    temperature: float = 1.0,
) -> BaselineSuiteResult:
    """Score one evaluation split with every available method.

    Methods without their required inputs (e.g. msp/energy without logits)
    are skipped with a reason rather than failing the suite.
    """
    x = np.asarray(eval_features, dtype=np.float64)
    y = np.asarray(truth_labels)
    reports, scores, skipped = {}, {}, {}

    def add(name, s):
        scores[name] = np.asarray(s, dtype=np.float64)
        reports[name] = evaluate(scores[name], y)

    if g_model is not None:
        add("tardis", predict_proba(g_model, x))
    else:
        skipped["tardis"] = "no distribution classifier given"
    if cluster_model is not None:
        add("cluster_only", nearest_cluster_score(cluster_model, x)[1])
    else:
        skipped["cluster_only"] = "no cluster model given"
    if logits is not None:
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"{logits.shape[0]} logit rows for {x.shape[0]} samples")
        add("msp", score_logit_rows(logits, "msp"))
        add("energy", score_logit_rows(logits, "energy", temperature))
    else:
        skipped["msp"] = skipped["energy"] = "no logits available"
    if id_train_features is not None:
        maha = mahalanobis_fit(id_train_features, id_class_labels)
        add("mahalanobis", mahalanobis_score_rows(maha, x))
    else:
        skipped["mahalanobis"] = "no ID training features given"
    return BaselineSuiteResult(reports=reports, scores=scores, skipped=skipped)
