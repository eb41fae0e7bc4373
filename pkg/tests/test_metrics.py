import math

import numpy as np
import pytest
from scipy.integrate import quad

from tardis.errors import (
    DegenerateDistribution,
    EmptyStage,
    LengthMismatch,
    SingleClass,
    TooFewRuns,
)
from tardis.metrics import (
    accuracy,
    auroc,
    evaluate,
    fpr_at_tpr,
    skewness,
    stage_ood_ratio,
    welch_t_test,
)


# --- independent oracles ---------------------------------------------------------

def auroc_pairwise(scores, labels):
    """O(n^2) definition: P(random OOD score > random ID score), ties 1/2."""
    scores = np.asarray(scores, dtype=float)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def fpr_sweep(scores, labels, target=0.95):
    """Exhaustive sweep over candidate thresholds (all score values)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    best_t = None
    for t in np.unique(scores):
        if np.mean(pos >= t) >= target and (best_t is None or t > best_t):
            best_t = t
    return float(np.mean(neg >= best_t))


def t_pvalue_quadrature(t_stat, df):
    """Two-sided p by numeric integration of the t density."""

    def density(x):
        log_c = (
            math.lgamma((df + 1) / 2.0)
            - math.lgamma(df / 2.0)
            - 0.5 * math.log(df * math.pi)
        )
        return math.exp(log_c - (df + 1) / 2.0 * math.log1p(x * x / df))

    tail, _ = quad(density, abs(t_stat), np.inf)
    return 2.0 * tail


def random_scoreset(rng, with_ties=True):
    n = int(rng.integers(4, 101))
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    if with_ties and rng.random() < 0.7:
        scores = rng.integers(0, 8, size=n) / 7.0  # coarse grid forces ties
    else:
        scores = rng.normal(size=n)
    return scores, labels


# --- auroc ------------------------------------------------------------------------

def test_auroc_perfect_separation():
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auroc_full_tie():
    assert auroc([0.5, 0.5], [0, 1]) == 0.5


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        scores, labels = random_scoreset(rng)
        assert auroc(scores, labels) == auroc_pairwise(scores, labels)


def test_auroc_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    scores, labels = random_scoreset(rng, with_ties=False)
    base = auroc(scores, labels)
    assert auroc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert auroc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_auroc_negation_complement():
    rng = np.random.default_rng(2)
    scores = rng.normal(size=40)  # continuous: tie-free
    labels = rng.integers(0, 2, size=40)
    labels[:2] = [0, 1]
    assert auroc(scores, labels) + auroc(-scores, labels) == pytest.approx(1.0)


def test_auroc_label_flip_score_negation_symmetry():
    rng = np.random.default_rng(3)
    scores, labels = random_scoreset(rng)
    assert auroc(scores, labels) == pytest.approx(auroc(-scores, 1 - labels), abs=1e-12)


def test_auroc_single_class_rejected():
    with pytest.raises(SingleClass):
        auroc([0.1, 0.2], [1, 1])


# --- fpr at tpr -------------------------------------------------------------------

def test_fpr95_worked_example():
    # threshold settles at 0.8 (both OOD scores >= 0.8), one of two ID above
    scores = np.array([0.9, 0.8, 0.1, 0.85])
    labels = np.array([1, 1, 0, 0])
    assert fpr_at_tpr(scores, labels) == 0.5


def test_fpr95_perfect_separation():
    assert fpr_at_tpr([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 0.0


def test_fpr95_identical_point_mass():
    assert fpr_at_tpr([0.3] * 10, [0, 1] * 5) == 1.0


def test_fpr_matches_sweep_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        scores, labels = random_scoreset(rng)
        assert fpr_at_tpr(scores, labels) == fpr_sweep(scores, labels)


def test_fpr_non_increasing_as_target_decreases():
    rng = np.random.default_rng(5)
    scores, labels = random_scoreset(rng)
    targets = [0.99, 0.95, 0.9, 0.7, 0.5, 0.2]
    values = [fpr_at_tpr(scores, labels, t) for t in targets]
    assert all(a >= b for a, b in zip(values, values[1:]))


# --- accuracy / skewness ------------------------------------------------------------

def test_accuracy_basics():
    assert accuracy([0, 1], [0, 1]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    with pytest.raises(LengthMismatch):
        accuracy([0], [0, 1])


def test_accuracy_matches_counting_oracle():
    rng = np.random.default_rng(6)
    predicted = rng.integers(0, 2, size=100)
    actual = rng.integers(0, 2, size=100)
    count = sum(int(p == a) for p, a in zip(predicted, actual))
    assert accuracy(predicted, actual) == count / 100


def test_skewness_symmetric_zero():
    assert skewness([1.0, 2.0, 3.0]) == pytest.approx(0.0, abs=1e-12)


def test_skewness_right_tail_positive():
    assert skewness([0.0, 0.0, 0.0, 1.0]) > 0


def test_skewness_matches_moment_oracle():
    rng = np.random.default_rng(7)
    scores = rng.normal(size=50)
    n = len(scores)
    mu = sum(scores) / n
    m2 = sum((s - mu) ** 2 for s in scores) / n
    m3 = sum((s - mu) ** 3 for s in scores) / n
    assert skewness(scores) == pytest.approx(m3 / m2**1.5, abs=1e-10)


def test_skewness_degenerate():
    with pytest.raises(DegenerateDistribution):
        skewness([2.0, 2.0, 2.0])
    with pytest.raises(DegenerateDistribution):
        skewness([1.0, 2.0])


# --- welch -------------------------------------------------------------------------

def test_welch_identical_samples():
    t, p, significant = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert t == 0.0
    assert p == pytest.approx(1.0)
    assert not significant


def test_welch_disjoint_supports_significant():
    _, p, significant = welch_t_test([0.0, 0.0, 0.0, 0.0], [10.0, 10.0, 10.0, 10.1])
    assert significant
    assert p < 0.05


def test_welch_pvalue_matches_quadrature():
    rng = np.random.default_rng(8)
    for _ in range(10):
        a = rng.normal(size=int(rng.integers(3, 12)))
        b = rng.normal(loc=rng.normal(), size=int(rng.integers(3, 12)))
        t, p, _ = welch_t_test(a, b)
        sa, sb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
        df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
        assert p == pytest.approx(t_pvalue_quadrature(t, df), abs=1e-6)


def test_welch_symmetry_up_to_sign():
    rng = np.random.default_rng(9)
    a = rng.normal(size=6)
    b = rng.normal(size=9) + 0.4
    t_ab, p_ab, _ = welch_t_test(a, b)
    t_ba, p_ba, _ = welch_t_test(b, a)
    assert t_ab == pytest.approx(-t_ba)
    assert p_ab == pytest.approx(p_ba)


def test_welch_too_few_runs():
    with pytest.raises(TooFewRuns):
        welch_t_test([1.0], [1.0, 2.0])


# --- stage ratios / reports -----------------------------------------------------------

def test_stage_ood_ratio():
    ratios = stage_ood_ratio(
        {"clustering": [1] * 17 + [0] * 83, "classifier": [0, 0, 0, 0]}
    )
    assert ratios["clustering"] == pytest.approx(0.17)
    assert ratios["classifier"] == 0.0
    with pytest.raises(EmptyStage):
        stage_ood_ratio({"empty": []})


def test_evaluate_report_fields():
    rng = np.random.default_rng(10)
    labels = np.array([0] * 30 + [1] * 30)
    scores = np.concatenate([rng.normal(0.3, 0.1, 30), rng.normal(0.7, 0.1, 30)])
    report = evaluate(scores, labels)
    assert 0.0 <= report.auroc <= 1.0
    assert 0.0 <= report.fpr95 <= 1.0
    assert report.n_id == 30 and report.n_ood == 30
    d = report.to_dict()
    assert set(d) >= {"auroc", "fpr95", "accuracy", "n_id", "n_ood", "skewness"}
