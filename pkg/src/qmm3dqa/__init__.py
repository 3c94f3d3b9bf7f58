"""Projection-based 3D model quality assessment.

Pipeline: render six perpendicular orthographic projections of a
normalized model, splice one quality mini-patch map by grid sampling,
extract features (builtin statistics or an external bridge), and regress
a perceptual score with a small trained head.  Evaluation follows the
standard IQA protocol (logistic remap, SRCC/PLCC/KRCC/RMSE,
content-disjoint k-fold).
"""

from .bench import AblationMode, BenchReport, count_head_params, run_benchmark
from .corpus import make_corpus
from .evaluation import (
    CrossValResult,
    FoldPlan,
    LogisticParams,
    MetricsReport,
    compute_metrics,
    fit_logistic,
    kendall_tau_b,
    make_folds,
    pearson,
    run_cross_database,
    run_cross_validation,
    spearman,
)
from .model_io import (
    DatasetManifest,
    ManifestEntry,
    Model3D,
    ModelKind,
    load_manifest,
    load_model,
    normalize_model,
    write_manifest,
    write_ply,
)
from .predictor import (
    BridgeClient,
    ExtractorKind,
    FeatureExtractor,
    FeatureExtractorSpec,
    PredictorState,
    TrainConfig,
    TrainReport,
    extract_features_builtin,
    init_state,
    load_state,
    pipeline_fitter,
    predict,
    regress,
    save_state,
    train,
)
from .projector import ProjectionSet, RenderConfig, render_projections
from .quality_loss import LossConfig, LossValue, combined_loss, mse_loss, rank_loss
from .sampler import (
    Cell,
    GridSpec,
    PatchRef,
    Qmm,
    assemble_per_view_maps,
    assemble_qmm,
    build_grid,
    sample_minipatch,
)

__version__ = "0.1.0"

__all__ = [
    "AblationMode",
    "BenchReport",
    "BridgeClient",
    "Cell",
    "CrossValResult",
    "DatasetManifest",
    "ExtractorKind",
    "FeatureExtractor",
    "FeatureExtractorSpec",
    "FoldPlan",
    "GridSpec",
    "LogisticParams",
    "LossConfig",
    "LossValue",
    "ManifestEntry",
    "MetricsReport",
    "Model3D",
    "ModelKind",
    "PatchRef",
    "PredictorState",
    "ProjectionSet",
    "Qmm",
    "RenderConfig",
    "TrainConfig",
    "TrainReport",
    "assemble_per_view_maps",
    "assemble_qmm",
    "build_grid",
    "combined_loss",
    "compute_metrics",
    "count_head_params",
    "extract_features_builtin",
    "fit_logistic",
    "init_state",
    "kendall_tau_b",
    "load_manifest",
    "load_model",
    "load_state",
    "make_corpus",
    "make_folds",
    "mse_loss",
    "normalize_model",
    "pearson",
    "pipeline_fitter",
    "predict",
    "rank_loss",
    "regress",
    "render_projections",
    "run_benchmark",
    "run_cross_database",
    "run_cross_validation",
    "sample_minipatch",
    "save_state",
    "spearman",
    "train",
    "write_manifest",
    "write_ply",
]
