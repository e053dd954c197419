"""segquality: track predicted segments over video and estimate their quality.

The pipeline consumes per-frame softmax tensors, tracks the predicted
segments over time, aggregates softmax-dispersion and geometry metrics into
per-track time series, and trains meta-models that predict segment quality
(adjusted IoU) without ground truth at inference time.
"""

from .dataset import (
    FeatureMatrix,
    SplitSpec,
    Standardization,
    build_timeseries,
    concat_feature_matrices,
    smoter_augment,
    split,
    standardize,
)
from .evaluate import (
    ExperimentConfig,
    accuracy,
    auroc,
    auroc_trapezoid,
    naive_baseline,
    r2_sigma,
    run_experiment,
)
from .metrics import MetricRecord, build_metric_record, mean_class_probs, mean_dispersion
from .models import (
    GBParams,
    MetaModel,
    NNParams,
    fit_gradient_boosting,
    fit_linear,
    fit_logistic_l1,
    fit_shallow_nn,
    load_model,
    save_model,
)
from .pipeline import label_sequence, process_sequence
from .segmentation import (
    DispersionMaps,
    Segment,
    SegmentFrame,
    connected_components,
    dispersion_maps,
    geometric_center,
    segment_frame,
    split_interior_boundary,
)
from .synth import SceneSpec, generate, id_consistency
from .targets import attach_targets, frame_targets, iou, iou_adj
from .tensor_io import LabelMap, ProbTensor, argmax_labels, load_tensor, store_tensor
from .tracking import (
    TrackedSequence,
    TrackerConfig,
    SegmentTracker,
    min_segment_distance,
    overlap,
    track_sequence,
)

__version__ = "0.1.0"
