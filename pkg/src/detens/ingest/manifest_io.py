"""JSON-lines persistence for manifests and proposal lists.

Manifest lines look like::

    {"image_id": "2008_000001", "width": 500, "height": 375,
     "source": "voc2012", "split": "train",
     "annotations": [{"bbox": [x_min, y_min, x_max, y_max],
                      "label": {"namespace": "voc", "name": "dog"},
                      "difficult": false, "source": "voc2012",
                      "kind": "ground_truth", "svm_trainable": true}]}

Proposal lines are ``{"image_id": ..., "boxes": [[x_min, y_min, x_max, y_max], ...]}``;
the box index used by feature files is the position in ``boxes``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import Annotation, BBox, ClassLabel, DatasetManifest, ImageRecord
from ..exceptions import ParseError
from ..io import atomic_write


def annotation_to_dict(ann: Annotation) -> dict:
    return {
        "bbox": list(ann.bbox.as_tuple()),
        "label": None if ann.label is None else {"namespace": ann.label.namespace, "name": ann.label.name},
        "difficult": ann.difficult,
        "source": ann.source,
        "kind": ann.kind,
        "svm_trainable": ann.svm_trainable,
    }


def record_to_dict(rec: ImageRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "width": rec.width,
        "height": rec.height,
        "source": rec.source,
        "split": rec.split,
        "annotations": [annotation_to_dict(a) for a in rec.annotations],
    }


def record_from_dict(d: dict) -> ImageRecord:
    anns = []
    for a in d.get("annotations", []):
        lab = a.get("label")
        anns.append(Annotation(
            BBox.from_sequence(a["bbox"]),
            None if lab is None else ClassLabel(lab["namespace"], lab["name"]),
            bool(a.get("difficult", False)),
            a.get("source", d.get("source", "synthetic")),
            a.get("kind", "ground_truth"),
            bool(a.get("svm_trainable", True)),
        ))
    return ImageRecord(d["image_id"], int(d["width"]), int(d["height"]), anns,
                       d.get("source", "synthetic"), d.get("split", "train"))


def dumps_manifest(manifest: DatasetManifest) -> str:
    return "".join(json.dumps(record_to_dict(r), sort_keys=True) + "\n" for r in manifest.records)


def write_manifest(manifest: DatasetManifest, path) -> None:
    atomic_write(path, dumps_manifest(manifest))


def _jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON ({exc.msg})", line=lineno) from None


def read_manifest(path, name=None) -> DatasetManifest:
    if name is None:
        name = Path(path).stem
    records = []
    for lineno, obj in _jsonl(path):
        try:
            records.append(record_from_dict(obj))
        except KeyError as exc:
            raise ParseError(f"{path}: record missing {exc}", line=lineno) from None
    return DatasetManifest(name, records)


def write_proposals(proposals: dict, path) -> None:
    """``proposals`` maps image_id to an ``(n, 4)`` array of corner boxes."""
    lines = []
    for image_id, boxes in proposals.items():
        arr = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        lines.append(json.dumps({"image_id": image_id, "boxes": arr.tolist()}) + "\n")
    atomic_write(path, "".join(lines))


def read_proposals(path) -> dict:
    out = {}
    for lineno, obj in _jsonl(path):
        try:
            out[obj["image_id"]] = np.asarray(obj["boxes"], dtype=np.float64).reshape(-1, 4)
        except KeyError as exc:
            raise ParseError(f"{path}: proposal line missing {exc}", line=lineno) from None
    return out


def proposals_from_manifest(manifest: DatasetManifest, include_negatives=True) -> dict:
    """Use annotation boxes themselves as proposals (GT first, then sampled negatives)."""
    out = {}
    for rec in manifest.records:
        boxes = [a.bbox.as_tuple() for a in rec.annotations if include_negatives or a.is_ground_truth]
        out[rec.image_id] = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return out

