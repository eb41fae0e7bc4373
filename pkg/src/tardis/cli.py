"""Command-line interface.

Subcommands mirror the library surface: pool, cluster, train-g, predict,
eval, baseline, suite, run, sweep-k, synth, geojson, bench. Exit codes:
0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, classifier, clustering, metrics, pipeline, pooling
from .data import atomic_write_text, load_dataset, load_logits, load_manifest, save_dataset
from .errors import ConfigError, DataError, MissingLogits, TardisError


def _write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def _read_scores_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "sample_id": row["sample_id"],
                    "ood_proba": float(row["ood_proba"]),
                    "ood_label": int(row["ood_label"]),
                }
            )
    if not rows:
        raise DataError(f"{path}: no score rows")
    return rows


def _write_scores_csv(path, sample_ids, scores, labels):
    lines = ["sample_id,ood_proba,ood_label"]
    for sid, s, lab in zip(sample_ids, scores, labels):
        lines.append(f"{sid},{repr(float(s))},{int(lab)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _ordered_ids(manifest):
    return [s.sample_id for s in sorted(manifest.samples, key=lambda s: s.row)]


def _truth_labels(manifest):
    mapping = {"ID": 0, "LABELED_ID": 0, "LABELED_OOD": 1}
    labels = []
    for s in sorted(manifest.samples, key=lambda s: s.row):
        if s.role not in mapping:
            raise ConfigError(f"sample {s.sample_id!r} has no ground-truth role ({s.role})")
        labels.append(mapping[s.role])
    return np.asarray(labels)


def _cmd_pool(args):
    manifest, values = load_dataset(args.infile)
    method = args.method
    if method == "pca":
        shape = manifest.tensor_shape
        if shape is None:
            raise ConfigError("--method pca requires a raw tensor manifest")
        method = pooling.fit_pca(values.reshape(-1, *shape), args.pca_components)
    pooled_manifest, pooled = pooling.pool_batch(manifest, values, method)
    out = Path(args.out)
    pooled_manifest.data_file = out.stem + "_features.bin"
    save_dataset(pooled_manifest, pooled, out)
    print(f"pooled {pooled.shape[0]} samples -> {pooled.shape[1]} features: {out}")
    return 0


def _cmd_cluster(args):
    _, id_x = load_dataset(args.id)
    _, wild_x = load_dataset(args.wild)
    from .data import concat

    x, origin = concat(id_x, wild_x)
    if args.search is not None:
        cfg, trials = clustering.search_kt(
            x, origin, n_trials=args.search, strategy=args.strategy, seed=args.seed
        )
        print(f"search picked k={cfg.k} id_threshold={cfg.id_threshold:.4f} "
              f"({len(trials)} trials)")
    elif args.auto or args.k is None:
        cfg = replace(clustering.default_config(x.shape[0]), seed=args.seed,
                      id_threshold=args.t)
    else:
        cfg = clustering.ClusterConfig(k=args.k, id_threshold=args.t, seed=args.seed)
    model, assignments = clustering.kmeans_fit(x, cfg)
    clustering.assign_surrogate_labels(model, assignments, origin, cfg.id_threshold)
    model.save(args.out)
    breakdown = clustering.composite_objective(model, assignments, origin, cfg.id_threshold)
    print(f"k={cfg.k} inertia={model.inertia:.6g} objective_total={breakdown.total:.4f} "
          f"-> {args.out}")
    return 0


def _cmd_train_g(args):
    manifest, x = load_dataset(args.features)
    if args.oracle:
        labels = _truth_labels(manifest)
        trained_on = "oracle"
    elif args.labels.endswith(".json"):
        model = clustering.ClusterModel.load(args.labels)
        idx, _ = clustering.nearest_cluster_score(model, x)
        labels = model.surrogate_label[idx]
        trained_on = "surrogate"
    else:
        by_id = {}
        with open(args.labels, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                by_id[row["sample_id"]] = int(row["label"])
        try:
            labels = np.asarray([by_id[sid] for sid in _ordered_ids(manifest)])
        except KeyError as exc:
            raise DataError(f"label file misses sample {exc}") from exc
        trained_on = "surrogate"
    cfg = classifier.TrainConfig(max_iter=args.max_iter, learning_rate=args.learning_rate)
    model = classifier.train(x, labels, cfg, trained_on=trained_on)
    model.save(args.out)
    print(f"trained on {x.shape[0]} rows ({trained_on}); "
          f"final loss {model.loss_history[-1]:.6f} -> {args.out}")
    return 0


def _cmd_predict(args):
    model = classifier.ClassifierModel.load(args.g)
    manifest, x = load_dataset(args.infile)
    probas = classifier.predict_proba(model, x)
    labels = (probas >= model.threshold).astype(int)
    _write_scores_csv(args.out, _ordered_ids(manifest), probas, labels)
    print(f"scored {x.shape[0]} samples -> {args.out}")
    return 0


def _cmd_eval(args):
    rows = _read_scores_csv(args.scores)
    truth = {}
    with open(args.labels, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            truth[row["sample_id"]] = int(row["label"])
    missing = [r["sample_id"] for r in rows if r["sample_id"] not in truth]
    if missing:
        raise DataError(f"labels file misses {len(missing)} scored samples "
                        f"(first: {missing[0]!r})")
    scores = np.asarray([r["ood_proba"] for r in rows])
    labels = np.asarray([truth[r["sample_id"]] for r in rows])
    report = metrics.evaluate(scores, labels)
    _write_json(args.out, report.to_dict())
    print(f"auroc={report.auroc:.4f} fpr95={report.fpr95:.4f} "
          f"accuracy={report.accuracy:.4f} -> {args.out}")
    return 0


def _cmd_baseline(args):
    manifest, x = load_dataset(args.infile)
    ids = _ordered_ids(manifest)
    if args.method in ("msp", "energy"):
        if manifest.logits_file is None and args.logits is None:
            raise MissingLogits(f"{args.method} needs a logits payload")
        if args.logits is not None:
            raw = Path(args.logits).read_bytes()
            if manifest.logit_dim is None:
                raise ConfigError("--logits given but manifest lacks logit_dim")
            logits = np.frombuffer(raw, dtype="<f4").reshape(-1, manifest.logit_dim)
        else:
            logits = load_logits(args.infile)
        rows = np.asarray(
            [s.logits_row for s in sorted(manifest.samples, key=lambda s: s.row)]
        )
        scores = baselines.score_logit_rows(logits[rows], args.method, args.temperature)
    elif args.method == "mahalanobis":
        id_rows = [s for s in manifest.samples if s.role in ("ID", "LABELED_ID")]
        if not id_rows:
            raise DataError("mahalanobis needs ID / LABELED_ID rows to fit on")
        fit_x = x[[s.row for s in id_rows]]
        fit_labels = None
        if all(s.class_label is not None for s in id_rows):
            fit_labels = [s.class_label for s in id_rows]
        model = baselines.mahalanobis_fit(fit_x, fit_labels)
        scores = baselines.mahalanobis_score_rows(model, x)
    elif args.method == "cluster-only":
        if args.cluster is None:
            raise ConfigError("--cluster model.json is required for cluster-only")
        model = clustering.ClusterModel.load(args.cluster)
        _, scores = clustering.nearest_cluster_score(model, x)
    else:
        raise ConfigError(f"unknown method {args.method!r}")
    labels = (np.asarray(scores) >= args.threshold).astype(int)
    _write_scores_csv(args.out, ids, scores, labels)
    print(f"{args.method}: scored {len(ids)} samples -> {args.out}")
    return 0


def _cmd_suite(args):
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    manifest, x = load_dataset(cfg["eval_manifest"])
    truth = _truth_labels(manifest)
    g_model = classifier.ClassifierModel.load(cfg["g_model"]) if cfg.get("g_model") else None
    cluster_model = (
        clustering.ClusterModel.load(cfg["cluster_model"]) if cfg.get("cluster_model") else None
    )
    logits = None
    if manifest.logits_file is not None:
        rows = np.asarray(
            [s.logits_row for s in sorted(manifest.samples, key=lambda s: s.row)]
        )
        logits = load_logits(cfg["eval_manifest"])[rows]
    id_x = id_labels = None
    if cfg.get("id_manifest"):
        id_man, id_x = load_dataset(cfg["id_manifest"])
        id_rows = sorted(id_man.samples, key=lambda s: s.row)
        if all(s.class_label is not None for s in id_rows):
            id_labels = [s.class_label for s in id_rows]
    result = baselines.run_baseline_suite(
        x,
        truth,
        g_model=g_model,
        cluster_model=cluster_model,
        logits=logits,
        id_train_features=id_x,
        id_class_labels=id_labels,
    )
    table = {
        "methods": {name: rep.to_dict() for name, rep in result.reports.items()},
        "skipped": result.skipped,
    }
    _write_json(args.out, table)
    for name, rep in sorted(result.reports.items()):
        print(f"{name:>12}: auroc={rep.auroc:.4f} fpr95={rep.fpr95:.4f}")
    for name, reason in sorted(result.skipped.items()):
        print(f"{name:>12}: skipped ({reason})")
    return 0


def _load_pipeline_config(path) -> tuple[pipeline.PipelineConfig, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    out_dir = raw.get("out_dir", "tardis_out")
    return pipeline.PipelineConfig.from_dict(raw), out_dir


def _cmd_run(args):
    cfg, out_dir = _load_pipeline_config(args.config)
    out_dir = args.out or out_dir
    if cfg.n_runs > 1:
        aggregate = pipeline.repeat_runs(cfg, out_dir)
        agg = aggregate["aggregate"]
        for key, stats in agg.items():
            print(f"{key}: auroc {stats['auroc']['mean']:.4f} +- {stats['auroc']['std']:.4f}")
    else:
        art = pipeline.run_pipeline(cfg, out_dir)
        for key, rep in art.report["evals"].items():
            if rep:
                print(f"{key}: auroc={rep['auroc']:.4f} fpr95={rep['fpr95']:.4f}")
    print(f"artifacts under {out_dir}")
    return 0


def _cmd_sweep_k(args):
    cfg, out_dir = _load_pipeline_config(args.config)
    out_dir = args.out or out_dir
    ks = [int(v) for v in args.ks.split(",")]
    curve = pipeline.k_sweep(cfg, ks, out_dir)
    for point in curve:
        if "error" in point:
            print(f"k={point['k']}: failed ({point['error']})")
        else:
            print(f"k={point['k']}: surrogate auroc={point['surrogate']['auroc']:.4f} "
                  f"oracle auroc={point['oracle']['auroc']:.4f}")
    return 0


def _cmd_synth(args):
    spec = pipeline.SynthSpec(
        n_id=args.n_id,
        n_wild=args.n_wild,
        ood_fraction=args.ood_fraction,
        dim=args.dim,
        separation=args.delta,
        seed=args.seed,
        with_logits=args.with_logits,
    )
    id_path, wild_path = pipeline.synth_generate(spec, args.out)
    print(f"wrote {id_path} and {wild_path}")
    return 0


def _cmd_geojson(args):
    rows = _read_scores_csv(args.scores)
    samples = {}
    for manifest_path in args.manifest:
        for s in load_manifest(manifest_path).samples:
            samples[s.sample_id] = s
    collection = pipeline.emit_geojson(rows, samples)
    _write_json(args.out, collection)
    print(f"{len(collection['features'])} features -> {args.out}")
    return 0


def _cmd_bench(args):
    model = classifier.ClassifierModel.load(args.g)
    stats = pipeline.throughput_bench(model, n_samples=args.n)
    print(f"F={stats['feature_dim']} n={stats['n_samples']}: "
          f"mean {stats['mean_ms']:.4f} ms, p99 {stats['p99_ms']:.4f} ms "
          f"(budget {stats['budget_ms']} ms, within={stats['within_budget']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tardis", description="Post-hoc distribution-shift detection toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool", help="downsample raw activation tensors")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", choices=list(pooling.POOLING_METHODS), required=True)
    p.add_argument("--pca-components", type=int, default=pooling.DEFAULT_PCA_COMPONENTS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("cluster", help="fit k-means and assign surrogate labels")
    p.add_argument("--id", required=True)
    p.add_argument("--wild", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--auto", action="store_true", help="k = ceil(0.3 * n)")
    p.add_argument("--t", type=float, default=0.1, help="known-ID fraction threshold")
    p.add_argument("--search", type=int, metavar="TRIALS",
                   help="search (k, t) with this many trials")
    p.add_argument("--strategy", choices=("random", "grid"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("train-g", help="train the distribution classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", help="labels CSV (sample_id,label) or cluster model JSON")
    p.add_argument("--oracle", action="store_true", help="use manifest roles as labels")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_g)

    p = sub.add_parser("predict", help="score samples with a trained classifier")
    p.add_argument("--g", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="metrics for a scores CSV against labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="score with a single baseline method")
    p.add_argument("--method", choices=("msp", "energy", "mahalanobis", "cluster-only"),
                   required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--logits", help="override logits payload path")
    p.add_argument("--cluster", help="cluster model JSON (cluster-only)")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("suite", help="run every available baseline on one split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's out_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep-k", help="surrogate-vs-oracle curve over cluster counts")
    p.add_argument("--config", required=True)
    p.add_argument("--ks", required=True, help="comma-separated cluster counts")
    p.add_argument("--out", help="override the config's out_dir")
    p.set_defaults(func=_cmd_sweep_k)

    p = sub.add_parser("synth", help="generate a synthetic ID/wild benchmark")
    p.add_argument("--n-id", type=int, required=True)
    p.add_argument("--n-wild", type=int, required=True)
    p.add_argument("--ood-fraction", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--delta", type=float, default=3.0, help="ID/OOD mean separation (sigmas)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-logits", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("geojson", help="scores CSV + manifests -> GeoJSON points")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   help="manifest(s) providing sample coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_geojson)

    p = sub.add_parser("bench", help="per-sample prediction latency")
    p.add_argument("--g", required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TardisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
