"""Detector evaluation: AUROC, FPR at fixed TPR, accuracy, skewness, Welch test.

Conventions: label 1 is the positive (OOD) class and higher scores mean
more OOD; thresholding uses ``score >= t  =>  positive``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import (
    ConfigError,
    DegenerateDistribution,
    EmptyStage,
    LengthMismatch,
    SingleClass,
    TooFewRuns,
)


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise LengthMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClass("both classes must be present")
    return neg, pos


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by the group mean rank."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return starts[inverse] + (counts[inverse] + 1) / 2.0


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(random OOD score > random ID score), ties count 1/2."""
    neg, pos = _split_scores(scores, labels)
    ranks = _midranks(np.concatenate([neg, pos]))
    n0, n1 = neg.size, pos.size
    rank_sum = ranks[n0:].sum()
    return float((rank_sum - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def fpr_at_tpr(scores, labels, tpr_target: float = 0.95) -> float:
    """False-positive rate at the loosest threshold reaching the target TPR.

    The threshold is the largest score t with  (#OOD >= t) / #OOD >= tpr_target;
    returns the fraction of ID scores >= t.
    """
    if not 0.0 < tpr_target <= 1.0:
        raise ConfigError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    neg, pos = _split_scores(scores, labels)
    n = pos.size
    counts = np.arange(1, n + 1)
    m = int(counts[counts / n >= tpr_target][0])
    threshold = np.sort(pos)[n - m]
    return float(np.mean(neg >= threshold))


def accuracy(predicted, actual) -> float:
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise LengthMismatch(f"{predicted.shape} vs {actual.shape}")
    return float(np.mean(predicted == actual))


def skewness(scores) -> float:
    """Biased sample skewness g1 = m3 / m2^(3/2), central moments over n."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 3:
        raise DegenerateDistribution(f"need n >= 3 scores, got {scores.size}")
    centered = scores - scores.mean()
    m2 = np.mean(centered**2)
    if m2 == 0.0:
        raise DegenerateDistribution("zero variance")
    return float(np.mean(centered**3) / m2**1.5)


def welch_t_test(sample_a, sample_b) -> tuple[float, float, bool]:
    """Two-sided Welch t-test; returns (t, p, significant at 0.05).

    The p-value uses the incomplete-beta form of the t CDF with
    Welch-Satterthwaite degrees of freedom.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise TooFewRuns("each sample needs n >= 2")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            raise DegenerateDistribution("both samples constant and equal")
        return float("inf"), 0.0, True
    sa, sb = va / a.size, vb / b.size
    t = float((a.mean() - b.mean()) / np.sqrt(sa + sb))
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p, p < 0.05


def stage_ood_ratio(stage_labels: dict) -> dict:
    """Fraction of label-1 rows per named pipeline stage."""
    ratios = {}
    for stage, labels in stage_labels.items():
        labels = np.asarray(labels)
        if labels.size == 0:
            raise EmptyStage(f"stage {stage!r} has no rows")
        ratios[stage] = float(np.mean(labels == 1))
    return ratios


@dataclass
class EvalReport:
    auroc: float
    fpr95: float
    accuracy: float
    n_id: int
    n_ood: int
    skewness: float | None = None
    stage_ood_ratios: dict | None = None
    runs: list | None = None

    def to_dict(self) -> dict:
        d = {
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "accuracy": self.accuracy,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "skewness": self.skewness,
        }
        if self.stage_ood_ratios is not None:
            d["stage_ood_ratios"] = self.stage_ood_ratios
        if self.runs is not None:
            d["runs"] = self.runs
        return d


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Build an EvalReport for scores against 0/1 labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    predictions = (scores >= threshold).astype(np.int64)
    try:
        skew = skewness(scores)
    except DegenerateDistribution:
        skew = None
    return EvalReport(
        auroc=auroc(scores, labels),
        fpr95=fpr_at_tpr(scores, labels),
        accuracy=accuracy(predictions, labels),
        n_id=int(np.sum(labels == 0)),
        n_ood=int(np.sum(labels == 1)),
        skewness=skew,
    )


def summarize_runs(reports: list[EvalReport]) -> dict:
    """Mean and std (ddof=0) of each metric across per-seed reports."""
    out = {}
    for name in ("auroc", "fpr95", "accuracy"):
        values = np.asarray([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return out
