"""Post-hoc distribution-shift detection from exported model activations.

Workflow: export pooled activation features of known in-distribution
samples and of samples with unknown distribution ("wild"), cluster the
joint feature space to assign surrogate ID/OOD labels, train a logistic
distribution classifier on those labels, then evaluate or deploy it.
"""

from .baselines import (
    MahalanobisModel,
    energy_score,
    mahalanobis_fit,
    mahalanobis_score,
    msp_score,
    run_baseline_suite,
)
from .classifier import (
    ClassifierModel,
    TrainConfig,
    gradient_check,
    predict_label,
    predict_proba,
    train,
)
from .clustering import (
    ClusterConfig,
    ClusterModel,
    ObjectiveBreakdown,
    assign_surrogate_labels,
    composite_objective,
    default_cluster_count,
    default_config,
    kmeans_fit,
    nearest_cluster_score,
    search_kt,
)
from .data import (
    ORIGIN_ID,
    ORIGIN_WILD,
    DatasetManifest,
    SampleRecord,
    concat,
    export_csv,
    import_csv,
    load_dataset,
    load_logits,
    load_manifest,
    save_dataset,
)
from .errors import ConfigError, DataError, TardisError
from .metrics import (
    EvalReport,
    accuracy,
    auroc,
    evaluate,
    fpr_at_tpr,
    skewness,
    stage_ood_ratio,
    welch_t_test,
)
from .pipeline import (
    PipelineConfig,
    RunArtifacts,
    SynthSpec,
    emit_geojson,
    k_sweep,
    repeat_runs,
    run_pipeline,
    synth_generate,
    throughput_bench,
)
from .pooling import PcaReducer, fit_pca, pool, pool_batch

__version__ = "0.1.0"

__all__ = [
    "ClassifierModel",
    "ClusterConfig",
    "ClusterModel",
    "ConfigError",
    "DataError",
    "DatasetManifest",
    "EvalReport",
    "MahalanobisModel",
    "ObjectiveBreakdown",
    "ORIGIN_ID",
    "ORIGIN_WILD",
    "PcaReducer",
    "PipelineConfig",
    "RunArtifacts",
    "SampleRecord",
    "SynthSpec",
    "TardisError",
    "TrainConfig",
    "accuracy",
    "assign_surrogate_labels",
    "auroc",
    "composite_objective",
    "concat",
    "default_cluster_count",
    "default_config",
    "emit_geojson",
    "energy_score",
    "evaluate",
    "export_csv",
    "fit_pca",
    "fpr_at_tpr",
    "gradient_check",
    "import_csv",
    "k_sweep",
    "kmeans_fit",
    "load_dataset",
    "load_logits",
    "load_manifest",
    "mahalanobis_fit",
    "mahalanobis_score",
    "msp_score",
    "nearest_cluster_score",
    "pool",
    "pool_batch",
    "predict_label",
    "predict_proba",
    "repeat_runs",
    "run_baseline_suite",
    "run_pipeline",
    "save_dataset",
    "search_kt",
    "skewness",
    "stage_ood_ratio",
    "synth_generate",
    "throughput_bench",
    "train",
    "welch_t_test",
]
