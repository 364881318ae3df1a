"""PASCAL-style detection evaluation: matching, average precision, mAP and
result tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import VOC_ABBREVIATIONS, VOC_CLASSES, BBox, iou
from .exceptions import PreconditionError, ValidationError
from .io import atomic_write

TRUE_POSITIVE = "tp"
FALSE_POSITIVE = "fp"
IGNORED = "ignored"

AP_METHODS = ("area", "11point")


@dataclass
class MatchResult:
    flags: list
    matched: list

    @property
    def tp_flags(self):
        """Boolean TP indicator for every non-ignored detection, in input order."""
        return [f == TRUE_POSITIVE for f in self.flags if f != IGNORED]

    @property
    def n_tp(self):
        return sum(f == TRUE_POSITIVE for f in self.flags)


def _gt_items(gts):
    out = []
    for g in gts:
        if isinstance(g, BBox):
            out.append((g, False))
        elif hasattr(g, "bbox"):
            out.append((g.bbox, bool(getattr(g, "difficult", False))))
        else:
            box, difficult = g
            out.append((box if isinstance(box, BBox) else BBox.from_sequence(box), bool(difficult)))
    return out


def match_detections(dets, gts, iou_threshold=0.5) -> MatchResult:
    """Greedily match one class's detections (sorted by confidence, highest
    first) to ground truth.

    ``gts`` maps image id to a list of annotations, boxes or ``(box,
    difficult)`` pairs. A detection is a true positive when some unmatched
    non-difficult box of its image overlaps it with IoU >= ``iou_threshold``
    (the best such box is consumed). Detections that only reach a difficult
    box are ignored; everything else is a false positive.
    """
    dets = list(dets)
    conf = [d.confidence for d in dets]
    if any(conf[i] < conf[i + 1] for i in range(len(conf) - 1)):
        raise PreconditionError("detections must be sorted by descending confidence")
    if hasattr(gts, "items"):
        gt_map = {k: _gt_items(v) for k, v in gts.items()}
    else:
        raise ValidationError("gts must map image_id to ground-truth boxes")
    used = {k: [False] * len(v) for k, v in gt_map.items()}
    flags, matched = [], []
    for d in dets:
        items = gt_map.get(d.image_id, [])
        best, best_iou, hits_difficult = None, -1.0, False
        for j, (box, difficult) in enumerate(items):
            ov = iou(d.bbox, box)
            if ov < iou_threshold:
                continue
            if difficult:
                hits_difficult = True
            elif not used[d.image_id][j] and ov > best_iou:
                best, best_iou = j, ov
        if best is not None:
            used[d.image_id][best] = True
            flags.append(TRUE_POSITIVE)
            matched.append(best)
        elif hits_difficult:
            flags.append(IGNORED)
            matched.append(None)
        else:
            flags.append(FALSE_POSITIVE)
            matched.append(None)
    return MatchResult(flags, matched)


def pr_curve(tp_flags, n_positive):
    tp = np.asarray(tp_flags, dtype=bool)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / n_positive if n_positive > 0 else np.zeros(len(tp))
    precision = ctp / np.maximum(ctp + cfp, 1)
    return recall, precision


def average_precision(tp_flags, n_positive, method="area") -> float:
    """AP from TP/FP flags in descending-confidence order.

    ``method="area"`` integrates the precision envelope (precision made
    non-increasing in recall) over recall; ``"11point"`` averages the
    envelope at recall 0, 0.1, ..., 1. Returns NaN when ``n_positive`` is 0,
    since AP is then undefined.
    """
    if method not in AP_METHODS:
        raise ValidationError(f"unknown AP method {method!r}")
    if n_positive < 0:
        raise ValidationError("n_positive must be >= 0")
    if n_positive == 0:
        return math.nan
    if len(tp_flags) == 0:
        return 0.0
    recall, precision = pr_curve(tp_flags, n_positive)
    if method == "11point":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            reach = precision[recall >= t]
            total += reach.max() if reach.size else 0.0
        return float(total / 11.0)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return math.fsum((recall - prev) * envelope)


def mean_ap(per_class_ap, allow_subset=False) -> float:
    """Arithmetic mean of per-class APs.

    Without ``allow_subset`` exactly 20 defined values are required. With it,
    undefined (NaN) entries are dropped and the mean is over the rest.
    """
    vals = list(per_class_ap.values()) if hasattr(per_class_ap, "values") else list(per_class_ap)
    vals = [float(v) for v in vals]
    if not allow_subset:
        if len(vals) != len(VOC_CLASSES):
            raise ValidationError(f"mean_ap needs {len(VOC_CLASSES)} APs, got {len(vals)}")
        if any(math.isnan(v) for v in vals):
            raise ValidationError("undefined AP in a full 20-class mean; pass allow_subset=True")
    defined = [v for v in vals if not math.isnan(v)]
    if not defined:
        raise ValidationError("no defined APs to average")
    return math.fsum(defined) / len(defined)


@dataclass(eq=False)
class EvalResult:
    """Per-class AP (fractions in [0, 1], NaN when undefined), mAP and PR curves."""

    ap: dict
    mAP: float
    pr_curves: dict = field(default_factory=dict)
    n_positives: dict = field(default_factory=dict)

    @property
    def excluded_classes(self):
        return [c for c, v in self.ap.items() if math.isnan(v)]

    def to_dict(self) -> dict:
        return {
            "ap": {c: (None if math.isnan(v) else v) for c, v in self.ap.items()},
            "mAP": None if math.isnan(self.mAP) else self.mAP,
            "n_positives": dict(self.n_positives),
            "pr_curves": {c: {"recall": list(map(float, r)), "precision": list(map(float, p))}
                          for c, (r, p) in self.pr_curves.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "EvalResult":
        nan = math.nan
        return cls(
            {c: (nan if v is None else float(v)) for c, v in d["ap"].items()},
            nan if d.get("mAP") is None else float(d["mAP"]),
            {c: (np.asarray(v["recall"]), np.asarray(v["precision"])) for c, v in d.get("pr_curves", {}).items()},
            {c: int(v) for c, v in d.get("n_positives", {}).items()},
        )

    def __eq__(self, other):
        if not isinstance(other, EvalResult):
            return NotImplemented

        def same(a, b):
            return (math.isnan(a) and math.isnan(b)) or a == b

        if self.ap.keys() != other.ap.keys() or self.pr_curves.keys() != other.pr_curves.keys():
            return False
        return (
            all(same(self.ap[c], other.ap[c]) for c in self.ap)
            and same(self.mAP, other.mAP)
            and self.n_positives == other.n_positives
            and all(np.array_equal(self.pr_curves[c][0], other.pr_curves[c][0])
                    and np.array_equal(self.pr_curves[c][1], other.pr_curves[c][1]) for c in self.pr_curves)
        )

    __hash__ = None


def ground_truth_by_class(manifest, classes=VOC_CLASSES) -> dict:
    """``{class: {image_id: [(bbox, difficult), ...]}}`` for voc-labelled GT."""
    out = {c: {} for c in classes}
    for rec in manifest.records:
        for a in rec.ground_truth:
            if a.label.namespace != "voc" or a.label.name not in out:
                continue
            out[a.label.name].setdefault(rec.image_id, []).append((a.bbox, a.difficult))
    return out


def evaluate(detections, manifest, iou_threshold=0.5, method="area", classes=VOC_CLASSES) -> EvalResult:
    """Evaluate detections against a manifest's ground truth.

    Classes without any non-difficult ground truth get an undefined AP and
    are left out of the mAP.
    """
    gt = ground_truth_by_class(manifest, classes)
    by_class = {c: [] for c in classes}
    for i, d in enumerate(detections):
        if d.class_name in by_class:
            by_class[d.class_name].append((i, d))
    ap, curves, npos = {}, {}, {}
    for c in classes:
        dets = [d for _, d in sorted(by_class[c], key=lambda t: (-t[1].confidence, t[0]))]
        n_pos = sum(1 for boxes in gt[c].values() for _, diff in boxes if not diff)
        res = match_detections(dets, gt[c], iou_threshold)
        flags = res.tp_flags
        npos[c] = n_pos
        ap[c] = average_precision(flags, n_pos, method)
        curves[c] = pr_curve(flags, n_pos) if n_pos > 0 else (np.zeros(0), np.zeros(0))
    defined = [v for v in ap.values() if not math.isnan(v)]
    m = mean_ap(ap, allow_subset=True) if defined else math.nan
    return EvalResult(ap, m, curves, npos)


def _cell(v):
    return "-" if v is None or math.isnan(v) else f"{100.0 * v:.1f}"


def render_table(results) -> str:
    """Fixed-width text table, one row per ``(name, EvalResult)``, APs in percent."""
    results = list(results)
    if not results:
        raise ValidationError("render_table needs at least one result")
    name_w = max(8, max(len(n) for n, _ in results))
    widths = [max(5, len(a)) for a in VOC_ABBREVIATIONS]
    header = " ".join([f"{'':<{name_w}}"] + [f"{a:>{w}}" for a, w in zip(VOC_ABBREVIATIONS, widths)] + [f"{'mAP':>5}"])
    lines = [header, "-" * len(header)]
    for name, res in results:
        cells = [f"{_cell(res.ap.get(c, math.nan)):>{w}}" for c, w in zip(VOC_CLASSES, widths)]
        lines.append(" ".join([f"{name:<{name_w}}"] + cells + [f"{_cell(res.mAP):>5}"]))
    return "\n".join(lines) + "\n"


def results_to_json(results) -> str:
    return json.dumps([{"name": n, **r.to_dict()} for n, r in results], indent=1) + "\n"


def results_from_json(text) -> list:
    return [(d["name"], EvalResult.from_dict(d)) for d in json.loads(text)]


def write_pr_curves(result: EvalResult, directory) -> list:
    """One ``pr_<class>.csv`` (columns recall,precision) per evaluated class."""
    paths = []
    for c, (rec, prec) in result.pr_curves.items():
        path = Path(directory) / f"pr_{c.replace(' ', '_')}.csv"
        body = "recall,precision\n" + "".join(f"{r:.10g},{p:.10g}\n" for r, p in zip(rec, prec))
        atomic_write(path, body)
        paths.append(path)
    return paths
