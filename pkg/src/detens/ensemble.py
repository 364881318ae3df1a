"""Score proposals with several networks, average their outputs and reduce
the result to final detections with non-maximum suppression."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import VOC_CLASSES, BBox, ClassLabel
from .exceptions import AlignmentError, ValidationError
from .io import atomic_write
from .learn.regression import apply_deltas

log = logging.getLogger(__name__)

NMS_THRESHOLD = 0.3
SCORE_FLOOR = -1.1
N_CLASSES = len(VOC_CLASSES)
CLASS_INDEX = {c: i for i, c in enumerate(VOC_CLASSES)}


@dataclass(frozen=True, eq=False)
class ScoredBox:
    """One proposal's per-class SVM scores and, optionally, regressed boxes.

    ``scores`` has one entry per VOC class (``-inf`` where no model exists);
    ``regressed`` is a ``(20, 4)`` array of corner boxes or None.
    """

    image_id: str
    box_index: int
    bbox: BBox
    scores: np.ndarray = field(repr=False)
    regressed: Optional[np.ndarray] = field(default=None, repr=False)
    provenance: str = ""

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        if s.size != N_CLASSES:
            raise ValidationError(f"score vector must have {N_CLASSES} entries, got {s.size}")
        object.__setattr__(self, "scores", s)
        if self.regressed is not None:
            r = np.asarray(self.regressed, dtype=np.float64).reshape(N_CLASSES, 4)
            object.__setattr__(self, "regressed", r)

    def __eq__(self, other):
        if not isinstance(other, ScoredBox):
            return NotImplemented
        same_reg = (self.regressed is None and other.regressed is None) or (
            self.regressed is not None and other.regressed is not None
            and np.array_equal(self.regressed, other.regressed)
        )
        return (self.image_id == other.image_id and self.box_index == other.box_index
                and self.bbox == other.bbox and np.array_equal(self.scores, other.scores) and same_reg)

    __hash__ = None


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_name: str
    bbox: BBox
    confidence: float

    def __post_init__(self):
        ClassLabel("voc", self.class_name)
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass
class EnsembleMember:
    """One network's class models and its features for the proposals."""

    svms: dict
    store: object
    regressors: dict = field(default_factory=dict)
    name: str = ""


def _weights(svms):
    if not svms:
        raise ValidationError("no SVM models given")
    dims = {m.feature_dim for m in svms.values()}
    if len(dims) != 1:
        raise ValidationError(f"SVMs disagree on feature dimension: {sorted(dims)}")
    d = dims.pop()
    W = np.zeros((N_CLASSES, d))
    b = np.full(N_CLASSES, -np.inf)
    for name, m in svms.items():
        c = CLASS_INDEX[name]
        W[c] = m.weights
        b[c] = m.bias
    return W, b


def _image_scores(W, b, X):
    present = np.isfinite(b)
    S = np.full((X.shape[0], N_CLASSES), -np.inf)
    S[:, present] = X @ W[present].T + b[present]
    return S


def score_proposals(svms, store, proposals, provenance="") -> list:
    """Score every proposal with every class SVM: ``score[c] = w_c . x + b_c``."""
    W, b = _weights(svms)
    if store.feature_dim != W.shape[1]:
        raise ValidationError(f"feature dim {store.feature_dim} != SVM dim {W.shape[1]}")
    out = []
    for image_id, boxes in proposals.items():
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        if len(boxes) == 0:
            continue
        S = _image_scores(W, b, store.image_rows(image_id, len(boxes)))
        for i, box in enumerate(boxes):
            out.append(ScoredBox(image_id, i, BBox.from_sequence(box), S[i], None, provenance))
    return out


def regress_scored(scored, regressors, store, image_sizes=None) -> list:
    """Attach per-class regressed boxes; classes without a regressor keep the proposal.

    Boxes that regress to a degenerate or non-finite shape fall back to the
    proposal box.
    """
    by_image = defaultdict(list)
    for sb in scored:
        by_image[sb.image_id].append(sb)
    out = []
    for image_id, items in by_image.items():
        X = store.rows([(image_id, sb.box_index) for sb in items])
        P = np.array([sb.bbox.as_tuple() for sb in items])
        R = np.repeat(P[:, None, :], N_CLASSES, axis=1)
        size = None if image_sizes is None else image_sizes.get(image_id)
        for name, reg in regressors.items():
            c = CLASS_INDEX[name]
            boxes = apply_deltas(P, reg.predict(X), size)
            bad = ~(np.all(np.isfinite(boxes), axis=1) & (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1]))
            if bad.any():
                log.debug("%d degenerate regressed boxes for %s in %s", int(bad.sum()), name, image_id)
                boxes[bad] = P[bad]
            R[:, c] = boxes
        for sb, r in zip(items, R):
            out.append(ScoredBox(sb.image_id, sb.box_index, sb.bbox, sb.scores, r, sb.provenance))
    return out


def _mean_exact(stack):
    """Mean over axis 0 that is order-independent and exact for identical inputs."""
    stack = np.asarray(stack, dtype=np.float64)
    k = stack.shape[0]
    if k == 1:
        return stack[0].copy()
    lo, hi = stack.min(axis=0), stack.max(axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.sort(stack, axis=0).sum(axis=0) / k
    return np.where(lo == hi, lo, mean)


def average_scores(per_model) -> list:
    """Element-wise mean of aligned ScoredBox lists from several networks.

    Regressed boxes are averaged too when every model supplies them.
    """
    per_model = [list(m) for m in per_model]
    if not per_model:
        raise ValidationError("average_scores needs at least one model")
    k = len(per_model)
    n = len(per_model[0])
    for m, lst in enumerate(per_model[1:], start=1):
        if len(lst) != n:
            raise AlignmentError(f"model {m} has {len(lst)} scored boxes, model 0 has {n}")
    out = []
    for j in range(n):
        items = [lst[j] for lst in per_model]
        ref = items[0]
        for m, sb in enumerate(items[1:], start=1):
            if sb.image_id != ref.image_id or sb.box_index != ref.box_index:
                raise AlignmentError(
                    f"position {j}: model {m} has ({sb.image_id!r}, {sb.box_index}), "
                    f"model 0 has ({ref.image_id!r}, {ref.box_index})"
                )
        scores = _mean_exact([sb.scores for sb in items])
        regressed = None
        if all(sb.regressed is not None for sb in items):
            regressed = _mean_exact([sb.regressed for sb in items])
        out.append(ScoredBox(ref.image_id, ref.box_index, ref.bbox, scores, regressed, f"ensemble({k})"))
    return out


def average_regressed_boxes(boxes) -> BBox:
    """Coordinate-wise mean of one proposal's regressed boxes across networks."""
    boxes = list(boxes)
    if not boxes:
        raise ValidationError("cannot average an empty list of boxes")
    return BBox.from_sequence(_mean_exact([b.as_tuple() for b in boxes]))


def nms_indices(boxes, scores, iou_threshold=NMS_THRESHOLD) -> np.ndarray:
    """Greedy NMS on arrays; returns kept indices in descending score order.

    A box is suppressed when its IoU with a kept box is strictly above the
    threshold. Equal scores are visited in input order.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if len(boxes) == 0:
        return np.empty(0, dtype=np.intp)
    x0, y0, x1, y1 = boxes.T
    areas = (x1 - x0) * (y1 - y0)
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep = []
    while order.size:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        iw = np.minimum(x1[i], x1[rest]) - np.maximum(x0[i], x0[rest])
        ih = np.minimum(y1[i], y1[rest]) - np.maximum(y0[i], y0[rest])
        inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
        ovr = np.zeros_like(inter)
        np.divide(inter, areas[i] + areas[rest] - inter, out=ovr, where=inter > 0)
        same = (x0[rest] == x0[i]) & (y0[rest] == y0[i]) & (x1[rest] == x1[i]) & (y1[rest] == y1[i])
        ovr[same] = 1.0
        order = rest[ovr <= iou_threshold]
    return np.asarray(keep, dtype=np.intp)


def nms(detections, iou_threshold=NMS_THRESHOLD) -> list:
    """Greedy NMS over detections of a single class in a single image."""
    detections = list(detections)
    if not 0 < iou_threshold < 1:
        raise ValidationError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    if not detections:
        return []
    keys = {(d.image_id, d.class_name) for d in detections}
    if len(keys) > 1:
        raise ValidationError(f"nms expects one class in one image, got {sorted(keys)[:2]}...")
    boxes = np.array([d.bbox.as_tuple() for d in detections])
    scores = np.array([d.confidence for d in detections])
    return [detections[i] for i in nms_indices(boxes, scores, iou_threshold)]


def nms_all(detections, iou_threshold=NMS_THRESHOLD) -> list:
    """Apply :func:`nms` separately to every (image, class) group."""
    groups = defaultdict(list)
    for d in detections:
        groups[(d.image_id, d.class_name)].append(d)
    out = []
    for key in groups:
        out.extend(nms(groups[key], iou_threshold))
    return out


def _detections_from(scored, nms_threshold, score_floor, use_regressed=True):
    by_image = defaultdict(list)
    for sb in scored:
        by_image[sb.image_id].append(sb)
    out = []
    for image_id, items in by_image.items():
        S = np.stack([sb.scores for sb in items])
        for c, name in enumerate(VOC_CLASSES):
            sc = S[:, c]
            idx = np.flatnonzero(sc >= score_floor)
            if idx.size == 0:
                continue
            if use_regressed and items[0].regressed is not None:
                boxes = np.stack([items[i].regressed[c] for i in idx])
            else:
                boxes = np.stack([items[i].bbox.as_array() for i in idx])
            for k in nms_indices(boxes, sc[idx], nms_threshold):
                out.append(Detection(image_id, name, BBox.from_sequence(boxes[k]), sc[idx[k]]))
    return out


def run_ensemble(proposals, members, nms_threshold=NMS_THRESHOLD, score_floor=SCORE_FLOOR,
                 image_sizes=None, order="average_first") -> list:
    """Full test-time pipeline over ``members`` (one :class:`EnsembleMember` per network).

    With ``order="average_first"`` (default) scores and regressed boxes are
    averaged across networks, then each class is thresholded at
    ``score_floor`` and reduced with NMS. ``order="nms_first"`` runs NMS per
    network on its own scores and boxes and keeps every proposal that
    survives in at least one network, reported with the averaged score and
    box.
    """
    members = list(members)
    if not members:
        raise ValidationError("run_ensemble needs at least one member")
    per_model = []
    for m in members:
        scored = score_proposals(m.svms, m.store, proposals, m.name)
        scored = regress_scored(scored, m.regressors, m.store, image_sizes)
        per_model.append(scored)
    avg = average_scores(per_model)

    if order == "average_first":
        return _detections_from(avg, nms_threshold, score_floor)
    if order != "nms_first":
        raise ValidationError(f"unknown ensemble order {order!r}")

    survivors = set()
    for scored in per_model:
        for d in _detections_from(scored, nms_threshold, score_floor):
            survivors.add((d.image_id, d.class_name, d.bbox))
    keep = set()
    for scored in per_model:
        for sb in scored:
            for c, name in enumerate(VOC_CLASSES):
                if (sb.image_id, name, BBox.from_sequence(sb.regressed[c])) in survivors:
                    keep.add((sb.image_id, sb.box_index, c))
    by_image = defaultdict(list)
    for sb in avg:
        by_image[sb.image_id].append(sb)
    out = []
    for image_id, items in by_image.items():
        for c, name in enumerate(VOC_CLASSES):
            hits = [sb for sb in items if (image_id, sb.box_index, c) in keep and sb.scores[c] >= score_floor]
            hits.sort(key=lambda sb: (-sb.scores[c], sb.box_index))
            out.extend(Detection(image_id, name, BBox.from_sequence(sb.regressed[c]), sb.scores[c]) for sb in hits)
    return out


# --- detection files ---------------------------------------------------------

def detection_to_dict(d: Detection) -> dict:
    return {"image_id": d.image_id, "class": d.class_name, "bbox": list(d.bbox.as_tuple()), "score": d.confidence}


def dumps_detections(detections) -> str:
    return "".join(json.dumps(detection_to_dict(d)) + "\n" for d in detections)


def write_detections(detections, path) -> None:
    atomic_write(path, dumps_detections(detections))


def read_detections(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out.append(Detection(o["image_id"], o["class"], BBox.from_sequence(o["bbox"]), o["score"]))
    return out


def voc_detection_lines(detections, class_name) -> str:
    """Per-class VOC devkit text: ``image_id score xmin ymin xmax ymax`` (1-based, inclusive)."""
    lines = []
    for d in detections:
        if d.class_name != class_name:
            continue
        b = d.bbox
        lines.append(f"{d.image_id} {d.confidence:.6f} {b.x_min + 1:.1f} {b.y_min + 1:.1f} {b.x_max:.1f} {b.y_max:.1f}\n")
    return "".join(lines)


def scored_to_dict(sb: ScoredBox) -> dict:
    return {
        "image_id": sb.image_id,
        "box_index": sb.box_index,
        "bbox": list(sb.bbox.as_tuple()),
        "scores": [None if not np.isfinite(s) else float(s) for s in sb.scores],
        "regressed": None if sb.regressed is None else sb.regressed.tolist(),
        "provenance": sb.provenance,
    }
