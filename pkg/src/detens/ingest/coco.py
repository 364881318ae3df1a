"""COCO instances JSON reader and writer."""

from __future__ import annotations

import json
import logging
import os

from ..core import GROUND_TRUTH, Annotation, BBox, ClassLabel, DatasetManifest, ImageRecord
from ..exceptions import FieldMissingError, ParseError, ReferentialIntegrityError, ValidationError

log = logging.getLogger(__name__)


def _require(obj, key, context):
    if key not in obj:
        raise FieldMissingError(key, context)
    return obj[key]


def parse_coco_json(document, name="COCO", source="coco2014", split="trainval") -> DatasetManifest:
    """Parse a COCO instances document into a manifest.

    ``bbox`` entries ``[x, y, w, h]`` become corner boxes ``(x, y, x+w, y+h)``,
    clipped to the image. Crowd regions are flagged ``difficult``; boxes of
    zero extent are skipped with a warning. Segmentation data is ignored.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed COCO JSON: {exc.msg}", line=exc.lineno) from None

    images = _require(doc, "images", "document")
    anns = _require(doc, "annotations", "document")
    cats = _require(doc, "categories", "document")

    cat_names = {}
    for c in cats:
        cat_names[_require(c, "id", "category")] = _require(c, "name", "category")

    order = []
    info = {}
    per_image = {}
    for img in images:
        img_id = _require(img, "id", "image")
        fname = img.get("file_name")
        rid = os.path.splitext(fname)[0] if fname else str(img_id)
        info[img_id] = (rid, int(_require(img, "width", f"image {img_id}")), int(_require(img, "height", f"image {img_id}")))
        order.append(img_id)
        per_image[img_id] = []

    for i, a in enumerate(anns):
        ctx = f"annotation {a.get('id', i)}"
        img_id = _require(a, "image_id", ctx)
        cat_id = _require(a, "category_id", ctx)
        if img_id not in info:
            raise ReferentialIntegrityError(f"{ctx} references unknown image_id {img_id!r}")
        if cat_id not in cat_names:
            raise ReferentialIntegrityError(f"{ctx} references unknown category_id {cat_id!r}")
        x, y, w, h = (float(v) for v in _require(a, "bbox", ctx))
        if w < 0 or h < 0:
            raise ValidationError(f"{ctx} has negative width/height ({w}, {h})")
        _, iw, ih = info[img_id]
        x0, y0 = max(x, 0.0), max(y, 0.0)
        x1, y1 = min(x + w, float(iw)), min(y + h, float(ih))
        if x1 <= x0 or y1 <= y0:
            log.warning("skipping zero-area box in %s", ctx)
            continue
        label = ClassLabel.coco(cat_names[cat_id])
        per_image[img_id].append(
            Annotation(BBox(x0, y0, x1, y1), label, bool(a.get("iscrowd", 0)), source, GROUND_TRUTH)
        )

    records = []
    for img_id in order:
        rid, w, h = info[img_id]
        records.append(ImageRecord(rid, w, h, per_image[img_id], source, split))
    return DatasetManifest(name, records)


def to_coco_json(manifest: DatasetManifest, extension=".jpg") -> bytes:
    """Serialize coco-labelled ground truth back to an instances document."""
    names = []
    for rec in manifest.records:
        for ann in rec.ground_truth:
            if ann.label.namespace != "coco":
                raise ValidationError(f"cannot write {ann.label} to COCO JSON")
            if ann.label.name not in names:
                names.append(ann.label.name)
    cat_ids = {n: i + 1 for i, n in enumerate(names)}
    images, annotations = [], []
    for i, rec in enumerate(manifest.records, start=1):
        images.append({"id": i, "file_name": rec.image_id + extension, "width": rec.width, "height": rec.height})
        for ann in rec.ground_truth:
            b = ann.bbox
            annotations.append({
                "id": len(annotations) + 1,
                "image_id": i,
                "category_id": cat_ids[ann.label.name],
                "bbox": [b.x_min, b.y_min, b.x_max - b.x_min, b.y_max - b.y_min],
                "iscrowd": int(ann.difficult),
            })
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": i, "name": n} for n, i in cat_ids.items()],
    }
    return json.dumps(doc, indent=1).encode("utf-8")
