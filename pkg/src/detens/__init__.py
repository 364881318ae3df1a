"""Ensemble object-detection toolkit: dataset ingestion, per-class SVMs with
hard-negative mining, box regression, multi-network averaging, NMS and
PASCAL-style evaluation."""

from .core import (
    COCO_CLASSES,
    VOC_CLASSES,
    Annotation,
    BBox,
    ClassLabel,
    DatasetManifest,
    FeatureVector,
    ImageRecord,
    ModelSpec,
    intersection_area,
    iou,
)
from .ensemble import (
    Detection,
    EnsembleMember,
    ScoredBox,
    average_regressed_boxes,
    average_scores,
    nms,
    run_ensemble,
    score_proposals,
)
from .evaluation import EvalResult, average_precision, evaluate, match_detections, mean_ap, render_table
from .learn import BBoxRegressor, LinearSVM, SvmModel

__version__ = "0.1.0"
