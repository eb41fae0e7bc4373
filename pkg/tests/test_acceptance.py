"""Acceptance gate: one test per release criterion, one PASS line each.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
printed PASS lines). Known red: the energy constant-shift invariance
asserted by ``test_baseline_invariance_energy_constant_shift`` cannot hold
for a free-energy score (shifting every logit by c shifts the score by -c
exactly); the test states the claimed invariance verbatim and fails.
"""

import time

import numpy as np
import pytest

from tardis import clustering
from tardis.baselines import (
    energy_score,
    mahalanobis_fit,
    mahalanobis_score,
    msp_score,
    run_baseline_suite,
)
from tardis.classifier import TrainConfig, gradient_check, train
from tardis.clustering import ClusterConfig, default_config, kmeans_fit
from tardis.data import concat, load_dataset, load_logits
from tardis.metrics import auroc, fpr_at_tpr
from tardis.pipeline import (
    PipelineConfig,
    SynthSpec,
    repeat_runs,
    run_pipeline,
    synth_generate,
    throughput_bench,
)


def _report(name, detail):
    print(f"PASS {name}: {detail}")


# --- metric oracles --------------------------------------------------------------

def _auroc_pairwise(scores, labels):
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    wins = (pos > neg).sum() + 0.5 * (pos == neg).sum()
    return float(wins) / (pos.size * neg.size)


def _fpr_sweep(scores, labels, target=0.95):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    best_t = None
    for t in np.unique(scores):
        if np.mean(pos >= t) >= target and (best_t is None or t > best_t):
            best_t = t
    return float(np.mean(neg >= best_t))


def test_metric_oracles_exact_on_200_sets():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for case in range(200):
        n = int(rng.integers(4, 101))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        if case % 2:  # every other set drawn on a coarse grid to force ties
            scores = rng.integers(0, 10, size=n) / 9.0
        else:
            scores = rng.normal(size=n)
        assert auroc(scores, labels) == _auroc_pairwise(scores, labels), case
        assert fpr_at_tpr(scores, labels) == _fpr_sweep(scores, labels), case
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    _report("metric-oracles", f"200 sets exact, {elapsed:.2f}s")


# --- k-means sanity ---------------------------------------------------------------

def _brute_force_2partition(x):
    n = len(x)
    best = np.inf
    for bits in range(1, 2 ** (n - 1)):
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        cost = sum(((g - g.mean(axis=0)) ** 2).sum() for g in (x[~mask], x[mask]) if len(g))
        best = min(best, cost)
    return best


def test_kmeans_sanity_monotone_and_bruteforce():
    started = time.perf_counter()
    rng = np.random.default_rng(7)
    for seed in range(100):  # monotone inertia on random instances
        x = rng.normal(size=(int(rng.integers(10, 50)), int(rng.integers(2, 6))))
        model, _ = kmeans_fit(x, ClusterConfig(k=int(rng.integers(2, 7)), seed=seed))
        assert (np.diff(model.inertia_history) <= 1e-9).all(), seed

    hits, failures = 0, []
    for seed in range(100):  # global optimum on tiny instances
        inst = np.random.default_rng(1000 + seed)
        x = inst.normal(size=(int(inst.integers(4, 9)), 2))
        model, _ = kmeans_fit(x, ClusterConfig(k=2, seed=seed))
        if model.inertia <= _brute_force_2partition(x) + 1e-9:
            hits += 1
        else:
            failures.append(seed)
    for seed in failures:  # local-optimum allowance, documented per instance
        print(f"  kmeans local optimum at instance seed={seed}")
    assert hits >= 95, failures
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _report("kmeans-sanity", f"monotone 100/100, brute-force {hits}/100, {elapsed:.2f}s")


# --- surrogate labeling exactness ----------------------------------------------------

def test_surrogate_labeling_exactness(tmp_path):
    id_path, wild_path = synth_generate(
        SynthSpec(n_id=500, n_wild=500, ood_fraction=1.0, dim=8, separation=10.0, seed=0),
        tmp_path,
    )
    _, id_x = load_dataset(id_path)
    wild_manifest, wild_x = load_dataset(wild_path)
    x, origin = concat(id_x, wild_x)
    cfg = default_config(x.shape[0])
    model, assignments = kmeans_fit(x, cfg)
    labels = clustering.assign_surrogate_labels(model, assignments, origin, cfg.id_threshold)
    truth = np.array(
        [int(s.role == "LABELED_OOD") for s in sorted(wild_manifest.samples, key=lambda s: s.row)]
    )
    match = float(np.mean(labels[len(id_x):] == truth))
    breakdown = clustering.composite_objective(model, assignments, origin, cfg.id_threshold)
    assert match >= 0.99
    assert breakdown.total <= -0.9
    _report("surrogate-exactness", f"match={match:.4f}, objective total={breakdown.total:.4f}")


# --- surrogate classifier vs oracle, and vs clustering-only ---------------------------

@pytest.fixture(scope="module")
def overlapping_benchmark(tmp_path_factory):
    """10-seed pipeline aggregate on the overlapping (3-sigma) benchmark."""
    tmp_path = tmp_path_factory.mktemp("overlap")
    id_path, wild_path = synth_generate(
        SynthSpec(n_id=600, n_wild=600, separation=3.0, dim=8, seed=0), tmp_path / "data"
    )
    cfg = PipelineConfig(
        id_manifest=str(id_path),
        wild_manifest=str(wild_path),
        cluster="auto",  # k = ceil(0.3 * train size), threshold 0.1
        mode="both",
        seed=0,
    )
    return repeat_runs(cfg, tmp_path / "runs", n_runs=10, base_seed=0)


def test_surrogate_approaches_oracle(overlapping_benchmark):
    stats = overlapping_benchmark["aggregate"]
    gap = abs(stats["surrogate"]["auroc"]["mean"] - stats["oracle"]["auroc"]["mean"])
    assert gap <= 0.05
    _report(
        "surrogate-approaches-oracle",
        f"g*={stats['surrogate']['auroc']['mean']:.4f} "
        f"oracle={stats['oracle']['auroc']['mean']:.4f} gap={gap:.4f}",
    )


def test_classifier_beats_clustering_only(overlapping_benchmark):
    stats = overlapping_benchmark["aggregate"]
    margin = stats["surrogate"]["auroc"]["mean"] - stats["cluster_only"]["auroc"]["mean"]
    assert margin >= 0.02
    _report(
        "clustering-insufficiency",
        f"g*={stats['surrogate']['auroc']['mean']:.4f} "
        f"cluster-only={stats['cluster_only']['auroc']['mean']:.4f} margin={margin:.4f}",
    )


# --- classifier numerics ----------------------------------------------------------------

def test_classifier_numerics():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 21))
        f = int(rng.integers(1, 6))
        x = rng.normal(size=(n, f))
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.normal(size=f)
        err = gradient_check(x, y, w, bias=float(rng.normal()), l2_lambda=0.1)
        worst = max(worst, err)
        assert err <= 1e-4
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(60, 4))
        y = rng.integers(0, 2, size=60)
        y[:2] = [0, 1]
        model = train(x, y, TrainConfig(max_iter=200))
        assert (np.diff(model.loss_history) <= 0.0).all()
    _report("classifier-numerics", f"max gradient error {worst:.2e}, loss monotone")


# --- indistinguishability null ------------------------------------------------------------

def test_null_every_method_near_chance(tmp_path):
    id_path, wild_path = synth_generate(
        SynthSpec(n_id=2000, n_wild=2000, separation=0.0, dim=8, seed=1, with_logits=True),
        tmp_path / "data",
    )
    cfg = PipelineConfig(
        id_manifest=str(id_path), wild_manifest=str(wild_path),
        cluster="auto", mode="surrogate", seed=1,
    )
    art = run_pipeline(cfg, tmp_path / "out")
    wild_manifest, wild_x = load_dataset(wild_path)
    order = sorted(wild_manifest.samples, key=lambda s: s.row)
    truth = np.array([int(s.role == "LABELED_OOD") for s in order])
    logits = load_logits(wild_path)[[s.logits_row for s in order]]
    id_manifest, id_x = load_dataset(id_path)
    result = run_baseline_suite(
        wild_x,
        truth,
        g_model=art.g_model,
        cluster_model=art.cluster_model,
        logits=logits,
        id_train_features=id_x,
        id_class_labels=[s.class_label for s in sorted(id_manifest.samples, key=lambda s: s.row)],
    )
    assert set(result.reports) == {"tardis", "cluster_only", "msp", "energy", "mahalanobis"}
    values = {name: rep.auroc for name, rep in result.reports.items()}
    for name, value in values.items():
        assert 0.45 <= value <= 0.55, (name, value)
    _report("indistinguishability-null",
            " ".join(f"{k}={v:.3f}" for k, v in sorted(values.items())))


# --- throughput -----------------------------------------------------------------------------

def test_throughput_under_budget():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 1280))
    y = (x[:, 0] > 0).astype(int)
    model = train(x, y, TrainConfig(max_iter=50))
    stats = throughput_bench(model, n_samples=10_000)
    assert stats["feature_dim"] == 1280
    assert stats["mean_ms"] < 3.0
    _report("throughput",
            f"mean {stats['mean_ms']:.4f} ms, p99 {stats['p99_ms']:.4f} ms per sample")


# --- determinism ------------------------------------------------------------------------------

def test_determinism_bitwise_scores_csv(tmp_path):
    id_path, wild_path = synth_generate(
        SynthSpec(n_id=200, n_wild=200, separation=3.0, seed=17), tmp_path / "data"
    )
    cfg = PipelineConfig(
        id_manifest=str(id_path), wild_manifest=str(wild_path),
        cluster="auto", mode="both", seed=17,
    )
    art_a = run_pipeline(cfg, tmp_path / "a")
    art_b = run_pipeline(cfg, tmp_path / "b")
    bytes_a = art_a.scores_csv.read_bytes()
    assert bytes_a == art_b.scores_csv.read_bytes()
    _report("determinism", f"scores.csv identical across runs ({len(bytes_a)} bytes)")


# --- baseline invariances ----------------------------------------------------------------------

def test_baseline_invariance_msp_constant_shift():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        logits = rng.normal(size=int(rng.integers(2, 10))) * 3.0
        shift = float(rng.uniform(-20.0, 20.0))
        delta = abs(msp_score(logits + shift) - msp_score(logits))
        worst = max(worst, delta)
        assert delta <= 1e-6
    _report("msp-shift-invariance", f"max deviation {worst:.2e} over 50 instances")


def test_baseline_invariance_energy_constant_shift():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(50):
        logits = rng.normal(size=int(rng.integers(2, 10))) * 3.0
        shift = float(rng.uniform(-20.0, 20.0))
        delta = abs(energy_score(logits + shift) - energy_score(logits))
        worst = max(worst, delta)
        assert delta <= 1e-6, (
            f"energy score moved by {delta:.6f} under a constant logit shift; "
            f"the free energy -T*logsumexp(l/T) satisfies "
            f"energy(l + c) = energy(l) - c, so score-level shift invariance "
            f"cannot hold (rankings and score differences are preserved instead)"
        )
    _report("energy-shift-invariance", f"max deviation {worst:.2e} over 50 instances")


def test_baseline_invariance_mahalanobis_affine():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(50):
        f = int(rng.integers(2, 5))
        x = rng.normal(size=(40, f))
        labels = ["a"] * 20 + ["b"] * 20
        q, _ = np.linalg.qr(rng.normal(size=(f, f)))
        transform = q @ np.diag(rng.uniform(0.5, 2.0, size=f))
        offset = rng.normal(size=f)
        model = mahalanobis_fit(x, labels, epsilon=1e-12)
        model_t = mahalanobis_fit(x @ transform.T + offset, labels, epsilon=1e-12)
        z = rng.normal(size=f)
        delta = abs(
            mahalanobis_score(model, z) - mahalanobis_score(model_t, transform @ z + offset)
        )
        worst = max(worst, delta)
        assert delta <= 1e-6
    _report("mahalanobis-affine-invariance", f"max deviation {worst:.2e} over 50 instances")
