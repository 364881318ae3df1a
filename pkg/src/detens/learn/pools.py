"""Assemble per-class SVM and regression training sets from a manifest,
its proposals and a feature store."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import iou_matrix
from .regression import MATCH_IOU

# Proposals below this IoU with every same-class ground-truth box are negatives.
NEGATIVE_IOU = 0.3
# A proposal this close to a ground-truth box is treated as that box.
SAME_BOX_IOU = 1.0 - 1e-6


@dataclass
class ClassPools:
    class_name: str
    positives: np.ndarray
    negative_pools: list = field(default_factory=list)
    positive_keys: list = field(default_factory=list)
    negative_keys: list = field(default_factory=list)

    @property
    def n_negatives(self):
        return sum(len(p) for p in self.negative_pools)


def _gt_arrays(record, class_name):
    """Boxes of trainable same-class GT (split by difficult) and of excluded GT."""
    same, same_difficult, excluded = [], [], []
    for a in record.ground_truth:
        if not a.svm_trainable:
            excluded.append(a.bbox.as_tuple())
        elif a.label.name == class_name:
            (same_difficult if a.difficult else same).append(a.bbox.as_tuple())
    as_arr = lambda xs: np.asarray(xs, dtype=np.float64).reshape(-1, 4)  # noqa: E731
    return as_arr(same), as_arr(same_difficult), as_arr(excluded)


def _max_iou(boxes, gts):
    if len(gts) == 0 or len(boxes) == 0:
        return np.zeros(len(boxes))
    return iou_matrix(boxes, gts).max(axis=1)


def build_class_pools(manifest, proposals, store, class_name, negative_iou=NEGATIVE_IOU) -> ClassPools:
    """Positives are proposals coinciding with non-difficult GT of the class;
    negatives are proposals with IoU < ``negative_iou`` against all of the
    class's GT. Proposals coinciding with GT of unmapped (not SVM-trainable)
    classes are left out of both sets."""
    pos_keys, neg_pools, neg_keys = [], [], []
    for rec in manifest.records:
        boxes = proposals.get(rec.image_id)
        if boxes is None or len(boxes) == 0:
            continue
        same, difficult, excluded = _gt_arrays(rec, class_name)
        all_same = np.vstack([same, difficult])
        is_pos = _max_iou(boxes, same) >= SAME_BOX_IOU
        is_excluded = _max_iou(boxes, excluded) >= SAME_BOX_IOU
        is_neg = (_max_iou(boxes, all_same) < negative_iou) & ~is_excluded & ~is_pos
        pos_keys.extend((rec.image_id, int(i)) for i in np.flatnonzero(is_pos & ~is_excluded))
        keys = [(rec.image_id, int(i)) for i in np.flatnonzero(is_neg)]
        if keys:
            neg_keys.append(keys)
            neg_pools.append(store.rows(keys))
    dim = store.feature_dim
    positives = store.rows(pos_keys) if pos_keys else np.empty((0, dim))
    return ClassPools(class_name, positives, neg_pools, pos_keys, neg_keys)


def build_regression_set(manifest, proposals, store, class_name, match_iou=MATCH_IOU):
    """``(features, proposal_boxes, matched_gt_boxes)`` for proposals with
    IoU >= ``match_iou`` to a trainable GT box of the class (best match)."""
    feats, props, gts = [], [], []
    for rec in manifest.records:
        boxes = proposals.get(rec.image_id)
        if boxes is None or len(boxes) == 0:
            continue
        gt = np.asarray(
            [a.bbox.as_tuple() for a in rec.ground_truth if a.svm_trainable and a.label.name == class_name],
            dtype=np.float64,
        ).reshape(-1, 4)
        if len(gt) == 0:
            continue
        ov = iou_matrix(boxes, gt)
        best = ov.argmax(axis=1)
        keep = np.flatnonzero(ov.max(axis=1) >= match_iou)
        if len(keep) == 0:
            continue
        feats.append(store.rows([(rec.image_id, int(i)) for i in keep]))
        props.append(boxes[keep])
        gts.append(gt[best[keep]])
    dim = store.feature_dim
    if not feats:
        return np.empty((0, dim)), np.empty((0, 4)), np.empty((0, 4))
    return np.vstack(feats), np.vstack(props), np.vstack(gts)
