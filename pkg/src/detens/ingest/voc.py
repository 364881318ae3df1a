"""PASCAL VOC annotation XML reader and writer.

VOC files store 1-based inclusive pixel coordinates; they are shifted to the
internal half-open convention on read (``xmin - 1, ymin - 1, xmax, ymax``)
and shifted back on write.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET

from ..core import (
    GROUND_TRUTH,
    VOC_DEVKIT_NAMES,
    Annotation,
    BBox,
    ClassLabel,
    ImageRecord,
)
from ..exceptions import FieldMissingError, ParseError, ValidationError


def _text(elem, tag, context):
    child = elem.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise FieldMissingError(tag, context)
    return child.text.strip()


def _number(elem, tag, context):
    raw = _text(elem, tag, context)
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"non-numeric value {raw!r} for {tag!r} in {context}") from None


def parse_voc_xml(document, source="voc2012", split="train") -> ImageRecord:
    """Parse one VOC annotation document (bytes or str) into an ImageRecord.

    The image id is the ``filename`` stem. Devkit class names such as
    ``tvmonitor`` are mapped to the canonical voc-namespace names.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise ParseError(f"malformed VOC XML: {exc}", line=line) from None

    filename = _text(root, "filename", "annotation")
    size = root.find("size")
    if size is None:
        raise FieldMissingError("size", "annotation")
    width = int(_number(size, "width", "size"))
    height = int(_number(size, "height", "size"))

    annotations = []
    for idx, obj in enumerate(root.findall("object")):
        ctx = f"object {idx}"
        name = _text(obj, "name", ctx)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise FieldMissingError("bndbox", ctx)
        xmin, ymin, xmax, ymax = (_number(bnd, t, f"{ctx} bndbox") for t in ("xmin", "ymin", "xmax", "ymax"))
        diff_el = obj.find("difficult")
        difficult = bool(int(diff_el.text.strip())) if diff_el is not None and diff_el.text else False
        try:
            bbox = BBox(xmin - 1, ymin - 1, xmax, ymax)
        except ValidationError as exc:
            raise ValidationError(f"object {idx} has invalid bndbox: {exc}") from None
        try:
            label = ClassLabel.voc(name.lower())
        except ValidationError as exc:
            raise ValidationError(f"object {idx}: {exc}") from None
        annotations.append(Annotation(bbox, label, difficult, source, GROUND_TRUTH))

    image_id = os.path.splitext(filename)[0]
    return ImageRecord(image_id, width, height, annotations, source, split)


def _fmt(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def to_voc_xml(record: ImageRecord, extension=".jpg") -> bytes:
    """Serialize the ground-truth annotations of a voc-labelled record."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = record.image_id + extension
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(record.width)
    ET.SubElement(size, "height").text = str(record.height)
    ET.SubElement(size, "depth").text = "3"
    for ann in record.ground_truth:
        if ann.label.namespace != "voc":
            raise ValidationError(f"cannot write {ann.label} to VOC XML")
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = VOC_DEVKIT_NAMES.get(ann.label.name, ann.label.name)
        ET.SubElement(obj, "difficult").text = "1" if ann.difficult else "0"
        bnd = ET.SubElement(obj, "bndbox")
        b = ann.bbox
        for tag, v in (("xmin", b.x_min + 1), ("ymin", b.y_min + 1), ("xmax", b.x_max), ("ymax", b.y_max)):
            ET.SubElement(bnd, tag).text = _fmt(v)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=False) + b"\n"
