"""Training-set augmentation: class mapping, small-object filtering,
background sampling and manifest merging."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, replace

import numpy as np

from ..core import (
    SAMPLED_NEGATIVE,
    VOC_CLASSES,
    Annotation,
    BBox,
    ClassLabel,
    DatasetManifest,
    ImageRecord,
    intersection_area,
)
from ..exceptions import MergeConflictError, PreconditionError, ValidationError

# (coco name, voc name)
COCO_TO_VOC_PAIRS = (
    ("airplane", "aeroplane"),
    ("bicycle", "bike"),
    ("bird", "bird"),
    ("boat", "boat"),
    ("bottle", "bottle"),
    ("bus", "bus"),
    ("car", "car"),
    ("cat", "cat"),
    ("chair", "chair"),
    ("cow", "cow"),
    ("dining table", "dining table"),
    ("dog", "dog"),
    ("horse", "horse"),
    ("motorcycle", "motorbike"),
    ("person", "person"),
    ("potted plant", "potted plant"),
    ("sheep", "sheep"),
    ("couch", "sofa"),
    ("train", "train"),
    ("tv", "tv"),
)

MIN_OBJECT_SIDE = 30
NEGATIVE_MAX_SIDE = 300


class NegativeShortfallWarning(UserWarning):
    """Fewer background boxes could be placed than requested."""


@dataclass(frozen=True)
class ClassMap:
    entries: tuple = COCO_TO_VOC_PAIRS

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))
        if len(self.entries) != 20:
            raise ValidationError(f"class map needs 20 entries, got {len(self.entries)}")
        voc = [v for _, v in self.entries]
        if sorted(voc) != sorted(VOC_CLASSES):
            raise ValidationError("class map targets are not a permutation of the VOC classes")
        for coco, v in self.entries:
            ClassLabel.coco(coco)
        if len({c for c, _ in self.entries}) != 20:
            raise ValidationError("class map has duplicate COCO names")

    def lookup(self, coco_name):
        """VOC name for ``coco_name`` or None if it has no PASCAL counterpart."""
        return dict(self.entries).get(coco_name)


DEFAULT_CLASS_MAP = ClassMap()


def map_coco_labels(manifest: DatasetManifest, class_map: ClassMap = DEFAULT_CLASS_MAP) -> DatasetManifest:
    """Relabel mappable COCO objects into the voc namespace.

    Objects without a PASCAL counterpart keep their coco label and are marked
    ``svm_trainable=False``. Only labels change; geometry is untouched.
    """
    table = dict(class_map.entries)
    records = []
    for rec in manifest.records:
        anns = []
        for ann in rec.annotations:
            if ann.label is None:
                anns.append(ann)
                continue
            if ann.label.namespace != "coco":
                raise PreconditionError(
                    f"image {rec.image_id!r} already has a {ann.label.namespace} label {ann.label.name!r}"
                )
            voc = table.get(ann.label.name)
            if voc is None:
                anns.append(replace(ann, svm_trainable=False))
            else:
                anns.append(replace(ann, label=ClassLabel("voc", voc), svm_trainable=True))
        records.append(rec.with_annotations(anns))
    return DatasetManifest(manifest.name, records)


def filter_small_objects(manifest: DatasetManifest, min_side=MIN_OBJECT_SIDE, sources=("coco2014",)):
    """Drop ground-truth boxes narrower or shorter than ``min_side`` pixels.

    Only annotations whose source is in ``sources`` are filtered (pass
    ``sources=None`` to filter everything). Images are kept even when left
    without annotations.

    Returns ``(manifest, removed_count)``.
    """
    if min_side <= 0:
        raise ValueError(f"min_side must be positive, got {min_side}")
    removed = 0
    records = []
    for rec in manifest.records:
        kept = []
        for ann in rec.annotations:
            small = ann.bbox.width < min_side or ann.bbox.height < min_side
            if ann.is_ground_truth and small and (sources is None or ann.source in sources):
                removed += 1
            else:
                kept.append(ann)
        records.append(rec if len(kept) == len(rec.annotations) else rec.with_annotations(kept))
    return DatasetManifest(manifest.name, records), removed


def drop_unlabelled_images(manifest: DatasetManifest) -> DatasetManifest:
    """Remove images that have no SVM-trainable ground truth left."""
    keep = [r for r in manifest.records if any(a.is_ground_truth and a.svm_trainable for a in r.annotations)]
    return DatasetManifest(manifest.name, keep)


def image_rng(seed, image_id):
    """Generator seeded from the run seed and the image id, independent of record order."""
    return np.random.default_rng([int(seed), zlib.crc32(image_id.encode("utf-8"))])


def sample_negatives(record: ImageRecord, per_gt=3, seed=0, max_attempts=100, rng=None):
    """Rejection-sample background boxes that touch no ground-truth box.

    Each side is drawn uniformly from ``[30, min(image side, 300)]`` integer
    pixels and the box is placed uniformly inside the image. A candidate is
    accepted only if its intersection area with every ground-truth box is
    exactly zero. After ``max_attempts`` rejections for one box the sampler
    gives up and emits a :class:`NegativeShortfallWarning`.
    """
    if per_gt < 0:
        raise ValueError(f"per_gt must be >= 0, got {per_gt}")
    gts = [a.bbox for a in record.ground_truth]
    wanted = per_gt * len(gts)
    if wanted == 0:
        return []
    if rng is None:
        rng = image_rng(seed, record.image_id)

    max_w = min(record.width, NEGATIVE_MAX_SIDE)
    max_h = min(record.height, NEGATIVE_MAX_SIDE)
    out = []
    if max_w >= MIN_OBJECT_SIDE and max_h >= MIN_OBJECT_SIDE:
        for _ in range(wanted):
            for _attempt in range(max_attempts):
                w = int(rng.integers(MIN_OBJECT_SIDE, max_w + 1))
                h = int(rng.integers(MIN_OBJECT_SIDE, max_h + 1))
                x = int(rng.integers(0, record.width - w + 1))
                y = int(rng.integers(0, record.height - h + 1))
                box = BBox(x, y, x + w, y + h)
                if all(intersection_area(box, g) == 0.0 for g in gts):
                    out.append(Annotation(box, None, False, record.source, SAMPLED_NEGATIVE))
                    break
            else:
                break
    if len(out) < wanted:
        warnings.warn(
            f"image {record.image_id!r}: placed {len(out)} of {wanted} negatives",
            NegativeShortfallWarning,
            stacklevel=2,
        )
    return out


def add_sampled_negatives(manifest: DatasetManifest, per_gt=3, seed=0, max_attempts=100):
    """Append sampled negatives to every record. Returns ``(manifest, shortfall_images)``."""
    records, short = [], 0
    for rec in manifest.records:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NegativeShortfallWarning)
            negs = sample_negatives(rec, per_gt, seed, max_attempts)
        if any(issubclass(w.category, NegativeShortfallWarning) for w in caught):
            short += 1
        records.append(rec.with_annotations(list(rec.annotations) + negs))
    return DatasetManifest(manifest.name, records), short


def merge_manifests(manifests, name=None) -> DatasetManifest:
    """Concatenate manifests in order, rejecting duplicate image ids.

    COCO labels must have been mapped first: any remaining coco-namespace
    annotation must be flagged as not SVM-trainable.
    """
    manifests = list(manifests)
    seen = set()
    records = []
    for m in manifests:
        for rec in m.records:
            if rec.image_id in seen:
                raise MergeConflictError(rec.image_id)
            seen.add(rec.image_id)
            for ann in rec.annotations:
                if ann.label is not None and ann.label.namespace == "coco" and ann.svm_trainable:
                    raise PreconditionError(
                        f"image {rec.image_id!r} has unmapped COCO label {ann.label.name!r}; run map_coco_labels first"
                    )
            records.append(rec)
    if name is None:
        name = "+".join(m.name for m in manifests) if manifests else "merged"
    return DatasetManifest(name, records)


def effective_sizes(manifest: DatasetManifest) -> dict:
    """Image counts under the two plausible 'effective size' rules."""
    return {
        "images": len(manifest.records),
        "images_with_svm_ground_truth": sum(
            1 for r in manifest.records if any(a.is_ground_truth and a.svm_trainable for a in r.annotations)
        ),
    }
