"""K-means surrogate labeling over a joint known-ID + wild feature space.

The rows handed to the clusterer carry an origin flag (0 = known ID,
1 = wild/unknown). After Lloyd's algorithm partitions the space, every
cluster is labeled by composition: if at least ``id_threshold`` of its
members are known-ID rows the whole cluster (wild rows included) becomes
surrogate in-distribution (label 0), otherwise surrogate OOD (label 1).
Known-ID rows are relabeled by their cluster as well, so a downstream
classifier trains on cluster-consistent labels; pass ``pin_known_id=True``
to keep them pinned at 0 instead.

Parameter quality for a (k, id_threshold) pair is scored by a composite
objective (lower is better):

    total = entropy + p_mis_id - p_corr_id

where ``entropy`` is the size-weighted mean binary entropy (bits) of each
cluster's known-ID/wild composition, ``p_mis_id`` the fraction of known-ID
rows landing in OOD-labeled clusters and ``p_corr_id`` the complementary
fraction. Pure clusters with no mislabeled known-ID rows reach the
minimum, -1.

Determinism: k-means++ seeding and Lloyd iterations are driven entirely by
the config seed; identical inputs and seeds produce bitwise-identical
models. Recorded inertia is non-increasing across iterations; empty
clusters are re-seeded to the point farthest from its assigned centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ORIGIN_ID, atomic_write_text
from .errors import ConfigError, NoIdSamples, TardisError, TooFewSamples, UnfittedModel

LABEL_ID = 0
LABEL_OOD = 1

_TINY = 1e-300


@dataclass
class ClusterConfig:
    k: int
    id_threshold: float = 0.1
    seed: int = 0
    max_iter: int = 300
    tol: float = 1e-4  # relative centroid movement, scaled by the data's range norm
    n_init: int = 10   # k-means++ restarts; the best final inertia wins

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if not 0.0 < self.id_threshold < 1.0:
            raise ConfigError(f"id_threshold must lie in (0, 1), got {self.id_threshold}")
        if self.max_iter < 1 or self.tol < 0 or self.n_init < 1:
            raise ConfigError("max_iter and n_init must be >= 1 and tol >= 0")


@dataclass
class ClusterModel:
    centroids: np.ndarray            # (k, F)
    cluster_sizes: np.ndarray        # (k,) member counts
    inertia: float                   # sum of squared distances to nearest centroid
    inertia_history: list[float] = field(default_factory=list)
    id_fraction: np.ndarray | None = None      # (k,) set by assign_surrogate_labels
    surrogate_label: np.ndarray | None = None  # (k,) 0/1, set alongside id_fraction
    id_threshold: float | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "inertia": self.inertia,
            "centroids": self.centroids.tolist(),
            "cluster_sizes": self.cluster_sizes.tolist(),
        }
        if self.id_fraction is not None:
            d["id_fraction"] = self.id_fraction.tolist()
            d["surrogate_label"] = [
                "ID" if lab == LABEL_ID else "OOD" for lab in self.surrogate_label
            ]
            d["id_threshold"] = self.id_threshold
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        model = cls(
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            cluster_sizes=np.asarray(d["cluster_sizes"], dtype=np.int64),
            inertia=float(d["inertia"]),
        )
        if "id_fraction" in d:
            model.id_fraction = np.asarray(d["id_fraction"], dtype=np.float64)
            model.surrogate_label = np.asarray(
                [LABEL_ID if s == "ID" else LABEL_OOD for s in d["surrogate_label"]],
                dtype=np.int64,
            )
            model.id_threshold = float(d["id_threshold"])
        return model

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ObjectiveBreakdown:
    entropy: float    # size-weighted mean binary entropy of cluster composition, bits
    p_mis_id: float   # known-ID rows in OOD-labeled clusters / all known-ID rows
    p_corr_id: float  # complementary fraction; p_mis_id + p_corr_id == 1
    total: float      # entropy + p_mis_id - p_corr_id

    def to_dict(self) -> dict:
        return {
            "entropy": self.entropy,
            "p_mis_id": self.p_mis_id,
            "p_corr_id": self.p_corr_id,
            "total": self.total,
        }


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, k), clamped at zero."""
    d = (
        np.einsum("ij,ij->i", x, x)[:, None]
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
        - 2.0 * (x @ centroids.T)
    )
    return np.maximum(d, 0.0, out=d)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = _sq_dists(x, centroids[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # all remaining points coincide with a centroid
        centroids[j] = x[idx]
        d2 = np.minimum(d2, _sq_dists(x, centroids[j : j + 1])[:, 0])
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, cfg: ClusterConfig, scale: float):
    n = x.shape[0]
    history: list[float] = []
    for _ in range(cfg.max_iter):
        d = _sq_dists(x, centroids)
        assignments = d.argmin(axis=1)
        nearest = d[np.arange(n), assignments]
        history.append(float(nearest.sum()))
        counts = np.bincount(assignments, minlength=cfg.k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, x)
        new_centroids = np.where(
            (counts > 0)[:, None], sums / np.maximum(counts, 1)[:, None], centroids
        )
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # re-seed each empty cluster to the point currently farthest
            # from its assigned centroid; this cannot increase inertia
            contrib = nearest.copy()
            for c in empty:
                p = int(np.argmax(contrib))
                new_centroids[c] = x[p]
                contrib[p] = -1.0
        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if movement / scale < cfg.tol:
            break
    d = _sq_dists(x, centroids)
    assignments = d.argmin(axis=1)
    inertia = float(d[np.arange(n), assignments].sum())
    history.append(inertia)
    return centroids, assignments, inertia, history


def kmeans_fit(x: np.ndarray, cfg: ClusterConfig) -> tuple[ClusterModel, np.ndarray]:
    """Lloyd's algorithm, best of ``cfg.n_init`` k-means++ starts.

    Returns the fitted model (labels unassigned) and the per-row cluster
    index. ``model.inertia_history`` holds the winning start's inertia at
    every assignment step, which is non-increasing by construction.
    """
    cfg.validate()
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < cfg.k:
        raise TooFewSamples(f"cannot form {cfg.k} clusters from {n} samples")
    rng = np.random.default_rng(cfg.seed)
    # movement tolerance is relative to the span of the data
    scale = max(float(np.linalg.norm(x.max(axis=0) - x.min(axis=0))), _TINY)
    best = None
    for _ in range(cfg.n_init):
        start = _kmeans_pp_init(x, cfg.k, rng)
        result = _lloyd(x, start, cfg, scale)
        if best is None or result[2] < best[2]:
            best = result
    centroids, assignments, inertia, history = best
    model = ClusterModel(
        centroids=centroids,
        cluster_sizes=np.bincount(assignments, minlength=cfg.k),
        inertia=inertia,
        inertia_history=history,
    )
    return model, assignments


def _composition(
    k: int, assignments: np.ndarray, origin: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    assignments = np.asarray(assignments)
    origin = np.asarray(origin)
    if assignments.shape != origin.shape:
        raise ConfigError("assignments and origin flags must have equal length")
    sizes = np.bincount(assignments, minlength=k)
    id_counts = np.bincount(assignments[origin == ORIGIN_ID], minlength=k)
    return sizes, id_counts


def assign_surrogate_labels(
    model: ClusterModel,
    assignments: np.ndarray,
    origin: np.ndarray,
    id_threshold: float,
    pin_known_id: bool = False,
) -> np.ndarray:
    """Label every row by its cluster's known-ID fraction.

    A cluster whose known-ID fraction is >= id_threshold is labeled 0 (ID),
    otherwise 1 (OOD); each row inherits its cluster's label. Populates
    ``model.id_fraction`` / ``model.surrogate_label`` as a side effect.
    """
    sizes, id_counts = _composition(model.k, assignments, origin)
    fraction = id_counts / np.maximum(sizes, 1)
    cluster_label = np.where(fraction >= id_threshold, LABEL_ID, LABEL_OOD)
    model.id_fraction = fraction
    model.surrogate_label = cluster_label
    model.id_threshold = float(id_threshold)
    model.cluster_sizes = sizes
    labels = cluster_label[assignments]
    if pin_known_id:
        labels = np.where(np.asarray(origin) == ORIGIN_ID, LABEL_ID, labels)
    return labels


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy (bits) of (p, 1-p) with the 0*log0 := 0 convention."""
    out = np.zeros_like(p)
    for q in (p, 1.0 - p):
        lg = np.zeros_like(q)
        np.log2(q, out=lg, where=q > 0)
        out -= q * lg
    return out


def composite_objective(
    model: ClusterModel,
    assignments: np.ndarray,
    origin: np.ndarray,
    id_threshold: float,
    size_weighted: bool = True,
) -> ObjectiveBreakdown:
    """Score a clustering + threshold pair; lower total is better."""
    sizes, id_counts = _composition(model.k, assignments, origin)
    n_id = int(id_counts.sum())
    if n_id == 0:
        raise NoIdSamples("composite objective needs at least one known-ID row")
    nonempty = sizes > 0
    p = id_counts[nonempty] / sizes[nonempty]
    ent = _binary_entropy(p)
    if size_weighted:
        entropy = float(ent @ (sizes[nonempty] / sizes.sum()))
    else:
        entropy = float(ent.mean())
    fraction = id_counts / np.maximum(sizes, 1)
    ood_clusters = fraction < id_threshold
    mis = int(id_counts[ood_clusters].sum())
    p_mis = mis / n_id
    p_corr = (n_id - mis) / n_id
    return ObjectiveBreakdown(
        entropy=entropy, p_mis_id=p_mis, p_corr_id=p_corr, total=entropy + p_mis - p_corr
    )


def default_cluster_count(m: int) -> int:
    """ceil(0.3 * m) in exact integer arithmetic."""
    return (3 * m + 9) // 10


def default_config(m: int) -> ClusterConfig:
    """Deployment defaults: k = ceil(0.3 * m) clusters, threshold 0.1."""
    if m < 7:
        raise TooFewSamples(f"need at least 7 samples for the default rule, got {m}")
    return ClusterConfig(k=default_cluster_count(m), id_threshold=0.1, seed=0)


@dataclass
class TrialRecord:
    trial: int
    k: int
    id_threshold: float
    objective: ObjectiveBreakdown | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"trial": self.trial, "k": self.k, "id_threshold": self.id_threshold}
        if self.objective is not None:
            d.update(self.objective.to_dict())
        if self.error is not None:
            d["error"] = self.error
        return d


def _trial_pairs(k_lo, k_hi, t_lo, t_hi, n_trials, strategy, seed):
    if strategy == "random":
        rng = np.random.default_rng(seed)
        ks = rng.integers(k_lo, k_hi + 1, size=n_trials)
        ts = rng.uniform(t_lo, t_hi, size=n_trials)
        return list(zip(ks.tolist(), ts.tolist()))
    if strategy == "grid":
        n_k = int(np.ceil(np.sqrt(n_trials)))
        n_t = int(np.ceil(n_trials / n_k))
        ks = np.unique(np.round(np.linspace(k_lo, k_hi, n_k)).astype(int))
        ts = np.linspace(t_lo, t_hi, n_t)
        pairs = [(int(k), float(t)) for k in ks for t in ts]
        if len(pairs) < n_trials:  # k collisions after rounding: pad with extra t points
            extra = np.linspace(t_lo, t_hi, n_trials - len(pairs) + 2)[1:-1]
            pairs += [(int(ks[-1]), float(t)) for t in extra]
        return pairs[:n_trials]
    raise ConfigError(f"unknown search strategy {strategy!r}")


def search_kt(
    x: np.ndarray,
    origin: np.ndarray,
    k_bounds: tuple[int, int] | None = None,
    t_bounds: tuple[float, float] = (0.01, 0.2),
    n_trials: int = 20,
    strategy: str = "random",
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> tuple[ClusterConfig, list[TrialRecord]]:
    """Search (k, id_threshold) by minimizing the composite objective.

    Default bounds: k in [2, ceil(0.3 * n_rows)], threshold in [0.01, 0.2].
    Failed trials are logged and skipped; ties keep the earliest trial.
    """
    x = np.asarray(x)
    m = x.shape[0]
    k_lo, k_hi = k_bounds if k_bounds is not None else (2, default_cluster_count(m))
    k_hi = min(int(k_hi), m)
    k_lo = int(k_lo)
    t_lo, t_hi = float(t_bounds[0]), float(t_bounds[1])
    if not (2 <= k_lo <= k_hi):
        raise ConfigError(f"bad k bounds [{k_lo}, {k_hi}]")
    if not (0.0 < t_lo <= t_hi < 1.0):
        raise ConfigError(f"bad threshold bounds [{t_lo}, {t_hi}]")
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    log: list[TrialRecord] = []
    best: TrialRecord | None = None
    for i, (k, t) in enumerate(_trial_pairs(k_lo, k_hi, t_lo, t_hi, n_trials, strategy, seed)):
        record = TrialRecord(trial=i, k=k, id_threshold=t)
        try:
            cfg = ClusterConfig(k=k, id_threshold=t, seed=seed, max_iter=max_iter, tol=tol)
            model, assignments = kmeans_fit(x, cfg)
            record.objective = composite_objective(model, assignments, origin, t)
        except TardisError as exc:
            record.error = str(exc)
        log.append(record)
        if record.objective is not None and (
            best is None or record.objective.total < best.objective.total
        ):
            best = record
    if best is None:
        raise TooFewSamples("every search trial failed; see the trial log")
    return (
        ClusterConfig(
            k=best.k, id_threshold=best.id_threshold, seed=seed, max_iter=max_iter, tol=tol
        ),
        log,
    )


def nearest_cluster_score(model: ClusterModel, z: np.ndarray):
    """Distance-only OOD score: 1 - id_fraction of the nearest centroid.

    Accepts a single feature vector or an (n, F) batch; ties on distance go
    to the lowest cluster index.
    """
    if model.id_fraction is None:
        raise UnfittedModel("cluster model has no id_fraction; assign labels first")
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zz = z[None, :] if single else z
    if zz.shape[1] != model.centroids.shape[1]:
        raise ConfigError(
            f"feature dim {zz.shape[1]} != model dim {model.centroids.shape[1]}"
        )
    idx = _sq_dists(zz, model.centroids).argmin(axis=1)
    score = 1.0 - model.id_fraction[idx]
    if single:
        return int(idx[0]), float(score[0])
    return idx, score
