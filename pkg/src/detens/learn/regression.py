"""Class-specific bounding-box regression.

Targets use the centre-offset / log-size parameterisation::

    t_x = (gx - px) / pw      t_w = log(gw / pw)
    t_y = (gy - py) / ph      t_h = log(gh / ph)

with ``(x, y)`` box centres and ``(w, h)`` widths and heights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..core import BBox
from ..exceptions import DegenerateBoxError, SolverError, ValidationError

# Proposals need at least this IoU with a ground-truth box to be used as
# regression training pairs.
MATCH_IOU = 0.6


@dataclass(frozen=True)
class RegressionTarget:
    t_x: float
    t_y: float
    t_w: float
    t_h: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValidationError(f"non-finite regression target {self}")

    def as_array(self):
        return np.array([self.t_x, self.t_y, self.t_w, self.t_h], dtype=np.float64)


def _centers(boxes):
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    return boxes[:, 0] + 0.5 * w, boxes[:, 1] + 0.5 * h, w, h


def regression_targets(proposals, gts) -> np.ndarray:
    """Vectorised targets for aligned ``(n, 4)`` proposal and ground-truth arrays."""
    p = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    g = np.asarray(gts, dtype=np.float64).reshape(-1, 4)
    px, py, pw, ph = _centers(p)
    gx, gy, gw, gh = _centers(g)
    return np.stack([(gx - px) / pw, (gy - py) / ph, np.log(gw / pw), np.log(gh / ph)], axis=1)


def apply_deltas(proposals, deltas, image_size=None) -> np.ndarray:
    """Inverse of :func:`regression_targets`; optionally clip to ``(width, height)``."""
    p = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    px, py, pw, ph = _centers(p)
    cx = px + d[:, 0] * pw
    cy = py + d[:, 1] * ph
    w = pw * np.exp(d[:, 2])
    h = ph * np.exp(d[:, 3])
    out = np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)
    # zero deltas must return the proposal bit-for-bit, not via the centre round trip
    still = ~np.any(d, axis=1)
    out[still] = p[still]
    if image_size is not None:
        width, height = image_size
        out[:, 0::2] = np.clip(out[:, 0::2], 0.0, width)
        out[:, 1::2] = np.clip(out[:, 1::2], 0.0, height)
    return out


def compute_regression_targets(proposal: BBox, gt: BBox) -> RegressionTarget:
    t = regression_targets(proposal.as_array(), gt.as_array())[0]
    return RegressionTarget(*(float(v) for v in t))


def apply_regression(proposal: BBox, t: RegressionTarget, image_size=None) -> BBox:
    out = apply_deltas(proposal.as_array(), t.as_array(), image_size)[0]
    if not (np.all(np.isfinite(out)) and out[2] > out[0] and out[3] > out[1]):
        raise DegenerateBoxError(f"regression of {proposal.as_tuple()} by {t} gives degenerate box {tuple(out)}")
    return BBox(*(float(v) for v in out))


class BBoxRegressor(RegressorMixin, BaseEstimator):
    """Ridge regression from features to the four box targets.

    A constant column is appended to the features so the biases are
    regularised together with the weights; very large ``ridge_lambda``
    therefore shrinks predictions towards "leave the proposal unchanged".

    Parameters
    ----------
    ridge_lambda : float
        L2 penalty. ``0`` gives ordinary least squares and fails on a
        rank-deficient design.
    class_name : str, optional
        Label of the class this regressor refines.
    """

    def __init__(self, ridge_lambda=1000.0, class_name=None):
        self.ridge_lambda = ridge_lambda
        self.class_name = class_name

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        T = check_array(y, dtype=np.float64)
        if T.shape != (X.shape[0], 4):
            raise ValidationError(f"targets must have shape ({X.shape[0]}, 4), got {T.shape}")
        if self.ridge_lambda < 0:
            raise ValidationError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        A = np.hstack([X, np.ones((X.shape[0], 1))])
        gram = A.T @ A
        if self.ridge_lambda > 0:
            gram[np.diag_indices_from(gram)] += self.ridge_lambda
        elif np.linalg.cond(gram) > 1e12:
            raise SolverError("normal equations are singular with ridge_lambda=0; use ridge_lambda > 0")
        try:
            W = np.linalg.solve(gram, A.T @ T)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"{exc}; use ridge_lambda > 0") from None
        self.coef_ = W[:-1].T.copy()
        self.intercept_ = W[-1].copy()
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.coef_.T + self.intercept_

    def transform_boxes(self, X, proposals, image_size=None):
        """Regressed ``(n, 4)`` boxes for proposals with features ``X``."""
        return apply_deltas(proposals, self.predict(X), image_size)

    @property
    def feature_dim(self):
        return self.n_features_in_

    @classmethod
    def identity(cls, feature_dim, class_name=None, ridge_lambda=1000.0):
        """A fitted regressor that predicts zero targets."""
        reg = cls(ridge_lambda=ridge_lambda, class_name=class_name)
        reg.coef_ = np.zeros((4, feature_dim))
        reg.intercept_ = np.zeros(4)
        reg.n_features_in_ = feature_dim
        return reg


def train_bbox_regressor(features, proposals, matched_gts, ridge_lambda=1000.0, class_name=None) -> BBoxRegressor:
    features = np.asarray(features, dtype=np.float64)
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    matched_gts = np.asarray(matched_gts, dtype=np.float64).reshape(-1, 4)
    if len(proposals) < 1:
        raise ValidationError("bounding-box regression needs at least one training pair")
    if not (len(features) == len(proposals) == len(matched_gts)):
        raise ValidationError(
            f"misaligned regression inputs: {len(features)} features, {len(proposals)} proposals, "
            f"{len(matched_gts)} ground truths"
        )
    targets = regression_targets(proposals, matched_gts)
    return BBoxRegressor(ridge_lambda, class_name).fit(features.reshape(len(proposals), -1), targets)
