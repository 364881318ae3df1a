"""Per-class training loops over a manifest, used by the CLI and the
end-to-end synthetic run."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

from .core import VOC_CLASSES
from .learn.pools import NEGATIVE_IOU, build_class_pools, build_regression_set
from .learn.regression import MATCH_IOU, train_bbox_regressor
from .learn.svm import CACHE_CAP, DEFAULT_C, train_svm_with_mining

log = logging.getLogger(__name__)


def classes_present(manifest, classes=VOC_CLASSES):
    seen = {a.label.name for r in manifest.records for a in r.ground_truth
            if a.svm_trainable and a.label.namespace == "voc"}
    return [c for c in classes if c in seen]


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def train_class_svms(manifest, proposals, store, classes=None, c_param=DEFAULT_C, rounds=3,
                     negative_iou=NEGATIVE_IOU, cache_cap=CACHE_CAP, initial_per_image=None,
                     seed=0, jobs=1) -> dict:
    """Train one mined SVM per class that has positives; returns ``{class: SvmModel}``."""
    classes = classes_present(manifest) if classes is None else list(classes)

    def job(c):
        pools = build_class_pools(manifest, proposals, store, c, negative_iou)
        if len(pools.positives) == 0 or pools.n_negatives == 0:
            log.warning("skipping class %s: %d positives, %d negatives", c, len(pools.positives), pools.n_negatives)
            return c, None
        model = train_svm_with_mining(pools.positives, pools.negative_pools, c_param, rounds, c,
                                      cache_cap, initial_per_image, seed)
        log.info("trained SVM %s/%s: %d positives, %d negatives", store.model_name, c,
                 len(pools.positives), pools.n_negatives)
        return c, model

    return {c: m for c, m in _map(job, classes, jobs) if m is not None}


def train_class_regressors(manifest, proposals, store, classes=None, ridge_lambda=1000.0,
                           match_iou=MATCH_IOU, jobs=1) -> dict:
    classes = classes_present(manifest) if classes is None else list(classes)

    def job(c):
        X, P, G = build_regression_set(manifest, proposals, store, c, match_iou)
        if len(X) == 0:
            log.warning("skipping regressor for %s: no proposals with IoU >= %s", c, match_iou)
            return c, None
        return c, train_bbox_regressor(X, P, G, ridge_lambda, c)

    return {c: r for c, r in _map(job, classes, jobs) if r is not None}
