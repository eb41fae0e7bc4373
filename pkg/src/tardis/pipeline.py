"""End-to-end orchestration: load, shuffle, split, cluster, label, train, evaluate.

One run executes the four-step recipe on a known-ID dataset and a wild
dataset of unknown distribution:

1. load (and, for raw tensors, pool) both feature sets;
2. stack them with origin flags and shuffle with the run seed;
3. hold out ``validation_fraction`` of the rows; cluster the rest and
   assign surrogate ID/OOD labels by cluster composition;
4. train the distribution classifier on the clustered partition using
   surrogate labels (and/or true labels in oracle mode), then evaluate on
   the held-out rows.

Validation rows never see the clusterer; their surrogate labels for
agreement reporting are inherited from the nearest centroid. Metrics are
computed against true labels whenever the wild manifest carries them
(LABELED_ID / LABELED_OOD roles) and against inherited surrogate labels
otherwise, with the label source recorded in the report.

Everything is deterministic per seed: repeated runs with one config produce
byte-identical artifacts. Files are written atomically.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classifier, clustering, metrics
from .data import (
    ORIGIN_WILD,
    DatasetManifest,
    SampleRecord,
    atomic_write_text,
    concat,
    load_dataset,
    save_dataset,
)
from .errors import (
    ConfigError,
    DegenerateDistribution,
    DimensionMismatch,
    InvalidSpec,
    MissingCoordinates,
    SingleClass,
    TardisError,
)
from .pooling import fit_pca, pool_batch

TRUTH_UNKNOWN = -1

_ROLE_TRUTH = {"ID": 0, "LABELED_ID": 0, "LABELED_OOD": 1, "WILD": TRUTH_UNKNOWN}


@dataclass
class PipelineConfig:
    id_manifest: str
    wild_manifest: str
    pooling: str | None = None          # required when manifests hold raw tensors
    pca_components: int = 10
    validation_fraction: float = 0.30
    cluster: clustering.ClusterConfig | str = "auto"
    cluster_search: dict | None = None  # {"n_trials": .., "strategy": "random"|"grid"}
    train: classifier.TrainConfig = field(default_factory=classifier.TrainConfig)
    seed: int = 0
    mode: str = "surrogate"             # "surrogate" | "oracle" | "both"
    n_runs: int = 1
    relabel_known_id: bool = True

    def validate(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )
        if self.mode not in ("surrogate", "oracle", "both"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if isinstance(self.cluster, str) and self.cluster != "auto":
            raise ConfigError(f"cluster must be a ClusterConfig or 'auto', got {self.cluster!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d.pop("out_dir", None)
        cluster = d.get("cluster", "auto")
        if isinstance(cluster, dict):
            d["cluster"] = clustering.ClusterConfig(**cluster)
        train_cfg = d.get("train")
        if isinstance(train_cfg, dict):
            d["train"] = classifier.TrainConfig(**train_cfg)
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc
        cfg.validate()
        return cfg


@dataclass
class RunArtifacts:
    out_dir: Path
    report: dict
    cluster_model: clustering.ClusterModel
    g_model: classifier.ClassifierModel | None
    g_oracle_model: classifier.ClassifierModel | None
    paths: dict

    @property
    def scores_csv(self) -> Path:
        return Path(self.paths["scores_csv"])


def _write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


@contextmanager
def _stage(name: str):
    """Re-raise library errors with the pipeline stage prepended."""
    try:
        yield
    except TardisError as exc:
        try:
            wrapped = type(exc)(f"[stage: {name}] {exc}")
        except TypeError:  # error types with positional payloads pass through
            raise
        raise wrapped from exc


def _write_scores_csv(path: Path, sample_ids, probas, labels) -> None:
    lines = ["sample_id,ood_proba,ood_label"]
    for sid, p, lab in zip(sample_ids, probas, labels):
        lines.append(f"{sid},{repr(float(p))},{int(lab)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_stage_labels(path: Path, sample_ids, labels) -> None:
    lines = ["sample_id,label"]
    lines += [f"{sid},{int(lab)}" for sid, lab in zip(sample_ids, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _truth_from_roles(manifest: DatasetManifest) -> np.ndarray:
    out = np.empty(len(manifest.samples), dtype=np.int64)
    for s in manifest.samples:
        out[s.row] = _ROLE_TRUTH[s.role]
    return out


def _load_features(cfg: PipelineConfig):
    id_man, id_x = load_dataset(cfg.id_manifest)
    wild_man, wild_x = load_dataset(cfg.wild_manifest)
    raw = id_man.tensor_shape is not None or wild_man.tensor_shape is not None
    if raw:
        if cfg.pooling is None:
            raise ConfigError("raw tensor manifests require a pooling method")
        method = cfg.pooling
        if method == "pca":
            if id_man.tensor_shape != wild_man.tensor_shape:
                raise DimensionMismatch("PCA pooling needs matching tensor shapes")
            shape = id_man.tensor_shape
            stacked = np.vstack([id_x, wild_x]).reshape(-1, *shape)
            method = fit_pca(stacked, cfg.pca_components)
        id_man, id_x = pool_batch(id_man, id_x, method)
        wild_man, wild_x = pool_batch(wild_man, wild_x, method)
    return id_man, id_x, wild_man, wild_x


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path) -> RunArtifacts:
    """Execute one seeded run and write its artifacts under ``out_dir``."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    id_man, id_x, wild_man, wild_x = _load_features(cfg)
    x, origin = concat(id_x, wild_x)
    ordered = sorted(id_man.samples, key=lambda s: s.row) + sorted(
        wild_man.samples, key=lambda s: s.row
    )
    sample_ids = np.asarray([s.sample_id for s in ordered])
    truth = np.concatenate([_truth_from_roles(id_man), _truth_from_roles(wild_man)])
    truth_known = bool((truth != TRUTH_UNKNOWN).all())
    if cfg.mode in ("oracle", "both") and not truth_known:
        raise ConfigError(
            "oracle mode needs LABELED_ID/LABELED_OOD roles on every wild sample"
        )

    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, x_val = x[train_idx], x[val_idx]
    origin_train = origin[train_idx]
    truth_train, truth_val = truth[train_idx], truth[val_idx]

    # step 3: cluster the training partition and label it by composition
    trials = None
    if cfg.cluster_search is not None:
        search = dict(cfg.cluster_search)
        ccfg, trials = clustering.search_kt(
            x_train,
            origin_train,
            n_trials=int(search.get("n_trials", 20)),
            strategy=search.get("strategy", "random"),
            seed=cfg.seed,
        )
    elif cfg.cluster == "auto":
        ccfg = replace(clustering.default_config(len(train_idx)), seed=cfg.seed)
    else:
        ccfg = cfg.cluster
    with _stage("clustering"):
        cluster_model, assignments = clustering.kmeans_fit(x_train, ccfg)
        surrogate_train = clustering.assign_surrogate_labels(
            cluster_model,
            assignments,
            origin_train,
            ccfg.id_threshold,
            pin_known_id=not cfg.relabel_known_id,
        )
        objective = clustering.composite_objective(
            cluster_model, assignments, origin_train, ccfg.id_threshold
        )

    # step 4: train the distribution classifier(s)
    g_model = g_oracle = None
    with _stage("classifier"):
        if cfg.mode in ("surrogate", "both"):
            g_model = classifier.train(
                x_train, surrogate_train, cfg.train, trained_on="surrogate"
            )
        if cfg.mode in ("oracle", "both"):
            g_oracle = classifier.train(x_train, truth_train, cfg.train, trained_on="oracle")
    deploy_model = g_model if g_model is not None else g_oracle

    # evaluation on the held-out split
    nearest_idx, cluster_only_val = clustering.nearest_cluster_score(cluster_model, x_val)
    surrogate_val = cluster_model.surrogate_label[nearest_idx]
    eval_labels, labels_source = (
        (truth_val, "oracle") if truth_known else (surrogate_val, "surrogate")
    )
    stage_ratios = metrics.stage_ood_ratio(
        {
            "clustering": truth_train if truth_known else origin_train == ORIGIN_WILD,
            "classifier": surrogate_train if g_model is not None else truth_train,
        }
    )
    def _safe_eval(scores, labels, ratios=None):
        try:
            report = metrics.evaluate(scores, labels)
        except SingleClass:
            return None
        if ratios is not None:
            report.stage_ood_ratios = ratios
        return report.to_dict()

    evals: dict = {}
    if g_model is not None:
        scores_val = classifier.predict_proba(g_model, x_val)
        evals["surrogate"] = _safe_eval(scores_val, eval_labels, stage_ratios)
        evals["surrogate_vs_surrogate_labels"] = _safe_eval(scores_val, surrogate_val)
    if g_oracle is not None:
        evals["oracle"] = _safe_eval(classifier.predict_proba(g_oracle, x_val), truth_val)
    evals["cluster_only"] = _safe_eval(cluster_only_val, eval_labels)

    # deployment outputs: every sample scored by the deployed classifier
    probas = classifier.predict_proba(deploy_model, x)
    pred = (probas >= deploy_model.threshold).astype(np.int64)
    try:
        train_skew = metrics.skewness(probas[train_idx])
    except DegenerateDistribution:
        train_skew = None

    paths = {
        "cluster_model": str(out / "cluster_model.json"),
        "report": str(out / "report.json"),
        "scores_csv": str(out / "scores.csv"),
        "stage_clustering_labels": str(out / "stage_clustering_labels.csv"),
        "stage_classifier_labels": str(out / "stage_classifier_labels.csv"),
    }
    cluster_model.save(paths["cluster_model"])
    if g_model is not None:
        paths["g_model"] = str(out / "g_model.json")
        g_model.save(paths["g_model"])
    if g_oracle is not None:
        paths["g_oracle_model"] = str(out / "g_oracle_model.json")
        g_oracle.save(paths["g_oracle_model"])
    _write_scores_csv(Path(paths["scores_csv"]), sample_ids, probas, pred)
    _write_stage_labels(
        Path(paths["stage_clustering_labels"]),
        sample_ids[train_idx],
        truth_train if truth_known else (origin_train == ORIGIN_WILD).astype(int),
    )
    _write_stage_labels(
        Path(paths["stage_classifier_labels"]),
        sample_ids[train_idx],
        surrogate_train if g_model is not None else truth_train,
    )
    if trials is not None:
        paths["trials_csv"] = str(out / "trials.csv")
        lines = ["trial,k,id_threshold,entropy,p_mis_id,p_corr_id,total,error"]
        for t in trials:
            o = t.objective
            lines.append(
                f"{t.trial},{t.k},{t.id_threshold!r},"
                + (f"{o.entropy!r},{o.p_mis_id!r},{o.p_corr_id!r},{o.total!r}," if o else ",,,,")
                + (t.error or "")
            )
        atomic_write_text(Path(paths["trials_csv"]), "\n".join(lines) + "\n")
    geo_samples = {s.sample_id: s for s in ordered}
    if all(s.lat is not None and s.lon is not None for s in ordered):
        collection = emit_geojson(
            [
                {"sample_id": sid, "ood_proba": float(p), "ood_label": int(lab)}
                for sid, p, lab in zip(sample_ids, probas, pred)
            ],
            geo_samples,
        )
        paths["geojson"] = str(out / "map.geojson")
        _write_json(Path(paths["geojson"]), collection)

    report = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_total": int(n),
        "n_train": int(train_idx.size),
        "n_val": int(val_idx.size),
        "labels_source": labels_source,
        "cluster": {
            "k": ccfg.k,
            "id_threshold": ccfg.id_threshold,
            "inertia": cluster_model.inertia,
            "objective": objective.to_dict(),
        },
        "evals": evals,
        "stage_ood_ratios": stage_ratios,
        "train_score_skewness": train_skew,
        "artifacts": paths,
    }
    _write_json(Path(paths["report"]), report)
    return RunArtifacts(
        out_dir=out,
        report=report,
        cluster_model=cluster_model,
        g_model=g_model,
        g_oracle_model=g_oracle,
        paths=paths,
    )


def repeat_runs(
    cfg: PipelineConfig,
    out_dir: str | Path,
    n_runs: int | None = None,
    base_seed: int | None = None,
) -> dict:
    """Run the pipeline n times with seeds base_seed + i and aggregate.

    When both surrogate and oracle classifiers were trained with n_runs >= 2,
    a Welch t-test compares their per-run metrics.
    """
    out = Path(out_dir)
    n_runs = cfg.n_runs if n_runs is None else n_runs
    base_seed = cfg.seed if base_seed is None else base_seed
    runs = []
    for i in range(n_runs):
        art = run_pipeline(replace(cfg, seed=base_seed + i), out / f"run_{i:03d}")
        runs.append(art.report)
    aggregate: dict = {"n_runs": n_runs, "base_seed": base_seed, "aggregate": {}}
    for key in ("surrogate", "oracle", "cluster_only"):
        entries = [r["evals"].get(key) for r in runs]
        if all(e is not None for e in entries):
            aggregate["aggregate"][key] = {
                name: {
                    "mean": float(np.mean([e[name] for e in entries])),
                    "std": float(np.std([e[name] for e in entries])),
                }
                for name in ("auroc", "fpr95", "accuracy")
            }
    significance = None
    complete = all(
        r["evals"].get("oracle") is not None and r["evals"].get("surrogate") is not None
        for r in runs
    )
    if cfg.mode == "both" and complete:
        if n_runs >= 2:
            significance = {}
            for name in ("auroc", "fpr95"):
                oracle_vals = [r["evals"]["oracle"][name] for r in runs]
                surrogate_vals = [r["evals"]["surrogate"][name] for r in runs]
                try:
                    t, p, sig = metrics.welch_t_test(oracle_vals, surrogate_vals)
                    significance[name] = {"t": t, "p": p, "significant": sig}
                except DegenerateDistribution:
                    significance[name] = {"t": 0.0, "p": 1.0, "significant": False,
                                          "note": "identical constant samples"}
        else:
            significance = {"error": "need n_runs >= 2 for the significance test"}
    aggregate["significance"] = significance
    aggregate["runs"] = runs
    _write_json(out / "report.json", aggregate)
    return aggregate


def k_sweep(cfg: PipelineConfig, k_values, out_dir: str | Path) -> list[dict]:
    """Evaluate surrogate vs oracle metrics along a grid of cluster counts.

    The oracle entries are constant across k (the oracle never touches the
    clusterer); per-point failures are recorded and the sweep continues.
    """
    out = Path(out_dir)
    base = cfg.cluster if isinstance(cfg.cluster, clustering.ClusterConfig) else None
    threshold = base.id_threshold if base else 0.1
    curve = []
    for k in k_values:
        point_cfg = replace(
            cfg,
            cluster=clustering.ClusterConfig(k=int(k), id_threshold=threshold, seed=cfg.seed),
            mode="both",
        )
        entry: dict = {"k": int(k)}
        try:
            art = run_pipeline(point_cfg, out / f"k_{int(k):05d}")
            entry["k_over_train"] = k / art.report["n_train"]
            entry["surrogate"] = art.report["evals"]["surrogate"]
            entry["oracle"] = art.report["evals"]["oracle"]
            entry["cluster_only"] = art.report["evals"]["cluster_only"]
        except Exception as exc:  # per-point failure; keep sweeping
            entry["error"] = str(exc)
        curve.append(entry)
    _write_json(out / "k_sweep.json", {"points": curve})
    return curve


def emit_geojson(scores: list[dict], samples: dict[str, SampleRecord]) -> dict:
    """Build a GeoJSON FeatureCollection of scored samples.

    ``scores`` rows need sample_id / ood_proba / ood_label; every scored
    sample must resolve to a record with coordinates.
    """
    features = []
    for row in scores:
        sid = row["sample_id"]
        rec = samples.get(sid)
        if rec is None or rec.lat is None or rec.lon is None:
            raise MissingCoordinates(f"sample {sid!r} has no lat/lon")
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [rec.lon, rec.lat]},
                "properties": {
                    "sample_id": sid,
                    "ood_proba": float(row["ood_proba"]),
                    "ood_label": int(row["ood_label"]),
                    "role": rec.role,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


@dataclass
class SynthSpec:
    """Synthetic two-population benchmark generator settings.

    The ID population is a Gaussian mixture with unit-variance components;
    wild rows mix ID-law draws with OOD draws whose component means are
    displaced along the diagonal by a vector of Euclidean norm
    ``separation`` (so separation is in units of the component sigma).
    Hidden truth is stored as LABELED_ID / LABELED_OOD roles.
    """

    n_id: int
    n_wild: int
    ood_fraction: float = 0.5
    dim: int = 8
    separation: float = 3.0
    seed: int = 0
    n_modes: int = 2
    with_geo: bool = True
    with_logits: bool = False
    logit_dim: int = 4

    def validate(self) -> None:
        if min(self.n_id, self.n_wild, self.dim, self.n_modes, self.logit_dim) < 1:
            raise InvalidSpec("n_id, n_wild, dim, n_modes, logit_dim must be >= 1")
        if not 0.0 <= self.ood_fraction <= 1.0:
            raise InvalidSpec(f"ood_fraction must lie in [0, 1], got {self.ood_fraction}")
        if self.separation < 0:
            raise InvalidSpec(f"separation must be >= 0, got {self.separation}")


def synth_generate(spec: SynthSpec, out_dir: str | Path) -> tuple[Path, Path]:
    """Write paired ID and wild datasets; returns the two manifest paths."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    modes = rng.normal(0.0, 1.0, size=(spec.n_modes, spec.dim))
    shift = np.full(spec.dim, spec.separation / np.sqrt(spec.dim))

    def draw(count, displaced):
        comp = rng.integers(0, spec.n_modes, size=count)
        pts = modes[comp] + rng.normal(0.0, 1.0, size=(count, spec.dim))
        if displaced:
            pts = pts + shift
        return pts.astype(np.float32), comp

    id_x, id_comp = draw(spec.n_id, False)
    n_ood = int(round(spec.ood_fraction * spec.n_wild))
    wild_id_x, _ = draw(spec.n_wild - n_ood, False)
    wild_ood_x, _ = draw(n_ood, True)
    wild_x = np.vstack([wild_id_x, wild_ood_x])
    wild_roles = ["LABELED_ID"] * (spec.n_wild - n_ood) + ["LABELED_OOD"] * n_ood
    order = rng.permutation(spec.n_wild)
    wild_x = wild_x[order]
    wild_roles = [wild_roles[i] for i in order]

    logit_w = rng.normal(0.0, 1.0, size=(spec.dim, spec.logit_dim)) / np.sqrt(spec.dim)

    def geo(count):
        if not spec.with_geo:
            return [(None, None)] * count
        lats = rng.uniform(-60.0, 60.0, size=count)
        lons = rng.uniform(-180.0, 180.0, size=count)
        return list(zip(lats.tolist(), lons.tolist()))

    def build(prefix, xs, roles, class_labels=None):
        coords = geo(xs.shape[0])
        samples = []
        for i in range(xs.shape[0]):
            samples.append(
                SampleRecord(
                    sample_id=f"{prefix}_{i:05d}",
                    role=roles[i],
                    row=i,
                    lat=coords[i][0],
                    lon=coords[i][1],
                    class_label=None if class_labels is None else f"mode_{class_labels[i]}",
                    logits_row=i if spec.with_logits else None,
                )
            )
        manifest = DatasetManifest(
            samples=samples,
            data_file=f"{prefix}_features.bin",
            feature_dim=spec.dim,
            logits_file=f"{prefix}_logits.bin" if spec.with_logits else None,
            logit_dim=spec.logit_dim if spec.with_logits else None,
        )
        logits = None
        if spec.with_logits:
            logits = (xs.astype(np.float64) @ logit_w).astype(np.float32)
        path = out / f"{prefix}_manifest.json"
        save_dataset(manifest, xs, path, logits=logits)
        return path

    id_path = build("id", id_x, ["ID"] * spec.n_id, class_labels=id_comp)
    wild_path = build("wild", wild_x, wild_roles)
    return id_path, wild_path


def throughput_bench(
    model: classifier.ClassifierModel,
    n_samples: int = 10_000,
    seed: int = 0,
    budget_ms: float = 3.0,
) -> dict:
    """Per-sample latency of predict_proba over random vectors."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n_samples, model.feature_dim))
    for i in range(min(20, n_samples)):  # warmup
        classifier.predict_proba(model, z[i])
    elapsed = np.empty(n_samples)
    for i in range(n_samples):
        t0 = time.perf_counter()
        classifier.predict_proba(model, z[i])
        elapsed[i] = time.perf_counter() - t0
    elapsed_ms = elapsed * 1e3
    mean_ms = float(elapsed_ms.mean())
    return {
        "n_samples": n_samples,
        "feature_dim": model.feature_dim,
        "mean_ms": mean_ms,
        "p99_ms": float(np.percentile(elapsed_ms, 99)),
        "budget_ms": budget_ms,
        "within_budget": mean_ms < budget_ms,
    }
