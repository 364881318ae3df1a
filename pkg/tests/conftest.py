import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

VOC_FIXTURE = b"""<annotation>
  <folder>VOC2012</folder>
  <filename>2008_000123.jpg</filename>
  <size><width>500</width><height>375</height><depth>3</depth></size>
  <object>
    <name>dog</name>
    <pose>Left</pose>
    <truncated>0</truncated>
    <difficult>0</difficult>
    <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>100</xmax><ymax>100</ymax></bndbox>
  </object>
  <object>
    <name>tvmonitor</name>
    <difficult>1</difficult>
    <bndbox><xmin>201</xmin><ymin>51</ymin><xmax>300</xmax><ymax>180</ymax></bndbox>
  </object>
  <object>
    <name>bicycle</name>
    <bndbox><xmin>311.5</xmin><ymin>200</ymin><xmax>480</xmax><ymax>375</ymax></bndbox>
  </object>
</annotation>
"""

COCO_FIXTURE = b"""{
 "images": [
  {"id": 9, "file_name": "COCO_train2014_000000000009.jpg", "width": 640, "height": 480},
  {"id": 25, "file_name": "COCO_train2014_000000000025.jpg", "width": 640, "height": 426},
  {"id": 30, "file_name": "COCO_train2014_000000000030.jpg", "width": 640, "height": 428}
 ],
 "annotations": [
  {"id": 1, "image_id": 9, "category_id": 63, "bbox": [10, 20, 30, 40], "iscrowd": 0, "segmentation": [[1, 2, 3, 4]]},
  {"id": 2, "image_id": 9, "category_id": 18, "bbox": [100.37, 120.11, 200.5, 150.25], "iscrowd": 0},
  {"id": 3, "image_id": 25, "category_id": 24, "bbox": [385.53, 60.03, 214.97, 297.16], "iscrowd": 0},
  {"id": 4, "image_id": 25, "category_id": 5, "bbox": [0.0, 0.0, 12.0, 80.0], "iscrowd": 1}
 ],
 "categories": [
  {"id": 5, "name": "airplane"},
  {"id": 18, "name": "dog"},
  {"id": 24, "name": "zebra"},
  {"id": 63, "name": "couch"}
 ]
}
"""


@pytest.fixture
def voc_xml():
    return VOC_FIXTURE


@pytest.fixture
def coco_json():
    return COCO_FIXTURE
