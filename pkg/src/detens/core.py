"""Domain types and box geometry shared by every stage of the pipeline.

Boxes use continuous, 0-based pixel coordinates that are half-open on the
max edges, so ``width == x_max - x_min`` and two boxes that only share an
edge do not intersect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError

# Column order of the PASCAL results table; these names are canonical for
# the voc namespace.
VOC_CLASSES = (
    "aeroplane", "bike", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "dining table", "dog", "horse", "motorbike", "person",
    "potted plant", "sheep", "sofa", "train", "tv",
)

# Short column headers used when rendering result tables.
VOC_ABBREVIATIONS = (
    "aero", "bike", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "table", "dog", "horse", "motor", "person",
    "plant", "sheep", "sofa", "train", "tv",
)

# Names used by the VOC devkit XML files for classes whose canonical name
# differs.
VOC_DEVKIT_ALIASES = {
    "bicycle": "bike",
    "diningtable": "dining table",
    "pottedplant": "potted plant",
    "tvmonitor": "tv",
}
VOC_DEVKIT_NAMES = {v: k for k, v in VOC_DEVKIT_ALIASES.items()}

COCO_CLASSES = (
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag",
    "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon",
    "bowl", "banana", "apple", "sandwich", "orange", "broccoli", "carrot",
    "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear",
    "hair drier", "toothbrush",
)

SOURCES = ("voc2007", "voc2012", "coco2014", "synthetic")
GROUND_TRUTH = "ground_truth"
SAMPLED_NEGATIVE = "sampled_negative"
ANNOTATION_KINDS = (GROUND_TRUTH, SAMPLED_NEGATIVE)

_VOC_SET = frozenset(VOC_CLASSES)
_COCO_SET = frozenset(COCO_CLASSES)


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"non-finite box coordinates {coords}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError(f"box must have x_max > x_min and y_max > y_min, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_sequence(cls, seq: Sequence[float]) -> "BBox":
        x0, y0, x1, y1 = (float(v) for v in seq)
        return cls(x0, y0, x1, y1)

    def within(self, width: float, height: float) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= width and self.y_max <= height

    def clip(self, width: float, height: float) -> "BBox":
        return BBox(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the geometric intersection of two boxes (0 if they only touch)."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two ``(n, 4)`` and ``(m, 4)`` corner arrays."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0)
    same = np.all(a[:, None, :] == b[None, :, :], axis=2)
    out[same] = 1.0
    return out


@dataclass(frozen=True)
class ClassLabel:
    namespace: str
    name: str

    def __post_init__(self):
        if self.namespace == "voc":
            if self.name not in _VOC_SET:
                raise ValidationError(f"{self.name!r} is not a PASCAL VOC class")
        elif self.namespace == "coco":
            if self.name not in _COCO_SET:
                raise ValidationError(f"{self.name!r} is not a COCO class")
        else:
            raise ValidationError(f"unknown label namespace {self.namespace!r}")

    @classmethod
    def voc(cls, name: str) -> "ClassLabel":
        return cls("voc", VOC_DEVKIT_ALIASES.get(name, name))

    @classmethod
    def coco(cls, name: str) -> "ClassLabel":
        return cls("coco", name)


@dataclass(frozen=True)
class Annotation:
    bbox: BBox
    label: Optional[ClassLabel] = None
    difficult: bool = False
    source: str = "synthetic"
    kind: str = GROUND_TRUTH
    # False for COCO objects outside the 20-class mapping: kept in the
    # manifest, excluded from SVM pools.
    svm_trainable: bool = True

    def __post_init__(self):
        if self.kind not in ANNOTATION_KINDS:
            raise ValidationError(f"unknown annotation kind {self.kind!r}")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown dataset source {self.source!r}")
        if self.kind == GROUND_TRUTH and self.label is None:
            raise ValidationError("ground-truth annotation needs a label")
        if self.kind == SAMPLED_NEGATIVE and self.label is not None:
            raise ValidationError("sampled negatives are background and carry no label")

    @property
    def is_ground_truth(self) -> bool:
        return self.kind == GROUND_TRUTH


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    annotations: tuple = ()
    source: str = "synthetic"
    split: str = "train"

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"image {self.image_id!r} has invalid size {self.width}x{self.height}")
        object.__setattr__(self, "annotations", tuple(self.annotations))
        for i, ann in enumerate(self.annotations):
            if not ann.bbox.within(self.width, self.height):
                raise ValidationError(
                    f"annotation {i} of image {self.image_id!r} lies outside "
                    f"[0,{self.width}]x[0,{self.height}]: {ann.bbox.as_tuple()}"
                )

    @property
    def ground_truth(self):
        return [a for a in self.annotations if a.is_ground_truth]

    def with_annotations(self, annotations) -> "ImageRecord":
        return replace(self, annotations=tuple(annotations))


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise ValidationError(f"duplicate image_id {rec.image_id!r} in manifest {self.name!r}")
            seen.add(rec.image_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict:
        return {r.image_id: r for r in self.records}


@dataclass(frozen=True)
class ModelSpec:
    model_name: str
    feature_dim: int
    training_set: str = "VOC2012"

    def __post_init__(self):
        if int(self.feature_dim) <= 0:
            raise ValidationError(f"feature_dim must be positive, got {self.feature_dim}")


GOOGLENET = ModelSpec("GoogleNet", 1024)
VGG16 = ModelSpec("VGG-16", 4096)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise ValidationError("feature vector must have positive dimension")
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature vector contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())
