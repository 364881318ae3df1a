"""Synthetic images, proposals and oracle features for desk-scale runs.

Each proposal's feature vector is a one-hot indicator of the class of the
ground-truth box it was generated from (all zeros for background), followed
by four channels holding the exact regression targets from the proposal to
that box. With zero noise the classes are linearly separable and the box
corrections are a linear function of the features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GROUND_TRUTH, VOC_CLASSES, Annotation, BBox, ClassLabel, DatasetManifest, ImageRecord, iou
from .exceptions import ValidationError
from .ingest.augment import sample_negatives
from .ingest.features import FeatureStore, write_feature_file
from .ingest.manifest_io import write_manifest, write_proposals
from .learn.regression import regression_targets

MIN_JITTER_IOU = 0.5


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int = 50
    image_size: tuple = (500, 375)
    classes: tuple = VOC_CLASSES[:5]
    boxes_per_image: tuple = (1, 3)
    noise: float = 0.0
    seed: int = 0
    n_models: int = 2
    jitter_per_gt: int = 4
    negatives_per_gt: int = 3
    min_side: int = 40
    max_side: int = 200

    def __post_init__(self):
        classes = self.classes
        if isinstance(classes, int):
            if not 1 <= classes <= len(VOC_CLASSES):
                raise ValidationError(f"class count must be in [1, 20], got {classes}")
            classes = VOC_CLASSES[:classes]
        classes = tuple(classes)
        for c in classes:
            if c not in VOC_CLASSES:
                raise ValidationError(f"{c!r} is not a PASCAL VOC class")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if self.n_images < 1:
            raise ValidationError("n_images must be >= 1")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if self.n_models < 1:
            raise ValidationError("n_models must be >= 1")
        lo, hi = self.boxes_per_image
        if not 0 <= lo <= hi:
            raise ValidationError(f"invalid boxes_per_image range {self.boxes_per_image}")

    @property
    def feature_dim(self):
        return len(self.classes) + 4


def _place_gt(rng, spec, width, height):
    lo, hi = spec.boxes_per_image
    n = int(rng.integers(lo, hi + 1))
    boxes = []
    for _ in range(n):
        for _attempt in range(200):
            w = int(rng.integers(spec.min_side, min(spec.max_side, width) + 1))
            h = int(rng.integers(spec.min_side, min(spec.max_side, height) + 1))
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(0, height - h + 1))
            box = BBox(x, y, x + w, y + h)
            # keep ground-truth boxes well apart so their jitters stay unambiguous
            grown = BBox(x - w / 2, y - h / 2, x + 1.5 * w, y + 1.5 * h)
            if all(iou(grown, b) == 0.0 for b in boxes):
                boxes.append(box)
                break
    return boxes


def _jitter(rng, box, width, height):
    w, h = box.width, box.height
    cx = box.x_min + w / 2 + rng.normal(0, 0.08) * w
    cy = box.y_min + h / 2 + rng.normal(0, 0.08) * h
    nw = w * math.exp(rng.normal(0, 0.1))
    nh = h * math.exp(rng.normal(0, 0.1))
    x0, y0 = max(cx - nw / 2, 0.0), max(cy - nh / 2, 0.0)
    x1, y1 = min(cx + nw / 2, float(width)), min(cy + nh / 2, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    cand = BBox(round(x0, 2), round(y0, 2), round(x1, 2), round(y1, 2))
    return cand if iou(cand, box) >= MIN_JITTER_IOU else None


def gen_synthetic(spec: SyntheticSpec):
    """Returns ``(manifest, proposals, stores)`` with one FeatureStore per pseudo-network."""
    rng = np.random.default_rng(spec.seed)
    width, height = spec.image_size
    k = len(spec.classes)
    records, proposals = [], {}
    keys, base_rows = [], []
    for i in range(spec.n_images):
        image_id = f"syn_{i:05d}"
        gt_boxes = _place_gt(rng, spec, width, height)
        labels = [spec.classes[int(rng.integers(0, k))] for _ in gt_boxes]
        anns = [Annotation(b, ClassLabel("voc", c), False, "synthetic", GROUND_TRUTH) for b, c in zip(gt_boxes, labels)]
        rec = ImageRecord(image_id, width, height, anns, "synthetic", "train")
        records.append(rec)

        boxes, source = [], []
        for j, b in enumerate(gt_boxes):
            boxes.append(b)
            source.append(j)
        for j, b in enumerate(gt_boxes):
            for _ in range(spec.jitter_per_gt):
                cand = None
                for _attempt in range(20):
                    cand = _jitter(rng, b, width, height)
                    if cand is not None:
                        break
                if cand is not None:
                    boxes.append(cand)
                    source.append(j)
        for neg in sample_negatives(rec, spec.negatives_per_gt, rng=rng):
            boxes.append(neg.bbox)
            source.append(None)

        arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)
        proposals[image_id] = arr
        for bi, (box, src) in enumerate(zip(arr, source)):
            v = np.zeros(spec.feature_dim)
            if src is not None:
                v[spec.classes.index(labels[src])] = 1.0
                v[k:] = regression_targets(box, gt_boxes[src].as_array())[0]
            keys.append((image_id, bi))
            base_rows.append(v)

    base = np.array(base_rows).reshape(-1, spec.feature_dim)
    stores = []
    for m in range(spec.n_models):
        noise_rng = np.random.default_rng([spec.seed, m + 1])
        mat = base + (spec.noise * noise_rng.standard_normal(base.shape) if spec.noise > 0 else 0.0)
        stores.append(FeatureStore(f"synth{m}", spec.feature_dim, keys, mat))
    return DatasetManifest("synthetic", records), proposals, stores


def write_synthetic(spec: SyntheticSpec, out_dir) -> dict:
    """Write ``manifest.jsonl``, ``proposals.jsonl`` and ``features_<model>.defv``."""
    out = Path(out_dir)
    manifest, proposals, stores = gen_synthetic(spec)
    paths = {"manifest": out / "manifest.jsonl", "proposals": out / "proposals.jsonl", "features": []}
    write_manifest(manifest, paths["manifest"])
    write_proposals(proposals, paths["proposals"])
    for st in stores:
        p = out / f"features_{st.model_name}.defv"
        write_feature_file(st, p)
        paths["features"].append(p)
    return paths
