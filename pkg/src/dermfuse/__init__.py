"""Decision-level tools for binary skin-lesion classifier ensembles.

The package covers the full post-training workflow: validate and align
per-model prediction files, compute evaluation metrics and ROC curves, fuse
predictions with voting/averaging/max/weighted rules (weights from a tanh
transform of validation metrics), balance and split dataset manifests,
preprocess and augment images, and attribute fused or external predictions
to ensemble members or image regions with Shapley values.
"""

from .dataprep import (
    MANIFEST_LABELS,
    UNKNOWN,
    DatasetManifest,
    FoldAssignment,
    ManifestRecord,
    balance_sources,
    downsample_balance,
    drop_unknown,
    load_folds,
    load_manifest,
    merge_manifests,
    stratified_kfold,
    write_folds,
    write_manifest,
)
from .errors import (
    ConfigError,
    DermfuseError,
    MismatchError,
    ParseError,
    StorageError,
    TransportError,
    ValidationError,
)
from .explain import (
    Attribution,
    CoalitionValueFunction,
    ExternalPredictionProvider,
    SuperpixelAttribution,
    SuperpixelGrid,
    exact_shapley,
    member_attribution,
    predict_batch,
    sampled_shapley,
    superpixel_attribution,
)
from .fusion import (
    DEFAULT_WEIGHT_METRICS,
    FUSION_METHODS,
    FusedPrediction,
    ProbabilityVector,
    WeightVector,
    align_weights,
    argmax_label,
    fuse_dataset,
    hard_majority_vote,
    max_rule,
    soft_average,
    tanh_weights,
    weighted_average,
)
from .imgproc import (
    AugmentConfig,
    PreprocessConfig,
    RasterImage,
    brightness_shift,
    center_crop,
    color_enhance,
    contrast_enhance,
    denormalize_image,
    derive_image_seed,
    load_image,
    normalize_image,
    preprocess,
    random_augment,
    resize_image,
    save_image,
    sharpness_enhance,
)
from .metrics import (
    BENIGN,
    CLASS_LABELS,
    MALIGNANT,
    METRIC_NAMES,
    ConfusionCounts,
    MetricSet,
    RocCurve,
    confusion_counts,
    metric_set,
    roc_auc,
    roc_curve,
)
from .predstore import (
    AlignedDataset,
    EvaluationEntry,
    LabelSet,
    PredictionSet,
    RunReport,
    align_dataset,
    atomic_write_text,
    evaluate_dataset,
    load_labels,
    load_predictions,
    load_run_report,
    load_weights,
    report_from_dict,
    report_to_dict,
    save_weights,
    weights_from_dataset,
    write_fused_predictions,
    write_labels,
    write_predictions,
    write_run_report,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset",
    "Attribution",
    "AugmentConfig",
    "BENIGN",
    "CLASS_LABELS",
    "CoalitionValueFunction",
    "ConfigError",
    "ConfusionCounts",
    "DEFAULT_WEIGHT_METRICS",
    "DatasetManifest",
    "DermfuseError",
    "EvaluationEntry",
    "ExternalPredictionProvider",
    "FUSION_METHODS",
    "FoldAssignment",
    "FusedPrediction",
    "LabelSet",
    "MALIGNANT",
    "MANIFEST_LABELS",
    "METRIC_NAMES",
    "ManifestRecord",
    "MetricSet",
    "MismatchError",
    "ParseError",
    "PredictionSet",
    "PreprocessConfig",
    "ProbabilityVector",
    "RasterImage",
    "RocCurve",
    "RunReport",
    "StorageError",
    "SuperpixelAttribution",
    "SuperpixelGrid",
    "TransportError",
    "UNKNOWN",
    "ValidationError",
    "WeightVector",
    "align_dataset",
    "align_weights",
    "argmax_label",
    "atomic_write_text",
    "balance_sources",
    "brightness_shift",
    "center_crop",
    "color_enhance",
    "confusion_counts",
    "contrast_enhance",
    "denormalize_image",
    "derive_image_seed",
    "downsample_balance",
    "drop_unknown",
    "evaluate_dataset",
    "exact_shapley",
    "fuse_dataset",
    "hard_majority_vote",
    "load_folds",
    "load_image",
    "load_labels",
    "load_manifest",
    "load_predictions",
    "load_run_report",
    "load_weights",
    "max_rule",
    "member_attribution",
    "merge_manifests",
    "metric_set",
    "normalize_image",
    "predict_batch",
    "preprocess",
    "random_augment",
    "report_from_dict",
    "report_to_dict",
    "resize_image",
    "roc_auc",
    "roc_curve",
    "sampled_shapley",
    "save_image",
    "save_weights",
    "sharpness_enhance",
    "soft_average",
    "stratified_kfold",
    "superpixel_attribution",
    "tanh_weights",
    "weighted_average",
    "weights_from_dataset",
    "write_folds",
    "write_fused_predictions",
    "write_labels",
    "write_manifest",
    "write_predictions",
    "write_run_report",
]
