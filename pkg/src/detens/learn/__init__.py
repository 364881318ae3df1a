"""SVM scoring, hard-negative mining and bounding-box regression."""

from .model_io import (
    load_regressors,
    load_svms,
    regressor_from_json,
    regressor_to_json,
    save_regressor,
    save_svm,
    svm_from_json,
    svm_to_json,
)
from .pools import ClassPools, build_class_pools, build_regression_set
from .regression import (
    BBoxRegressor,
    RegressionTarget,
    apply_deltas,
    apply_regression,
    compute_regression_targets,
    regression_targets,
    train_bbox_regressor,
)
from .svm import (
    LinearSVM,
    SvmModel,
    hinge_objective,
    hinge_subgradient,
    mine_hard_negatives,
    train_concat_svm,
    train_svm,
    train_svm_with_mining,
)
