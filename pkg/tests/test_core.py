import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detens.core import BBox, ClassLabel, ImageRecord, Annotation, ModelSpec, FeatureVector, intersection_area, iou, iou_matrix
from detens.exceptions import ValidationError
from oracles import grid_intersection, grid_iou


@st.composite
def int_boxes(draw, limit=40):
    x0 = draw(st.integers(0, limit - 1))
    y0 = draw(st.integers(0, limit - 1))
    x1 = draw(st.integers(x0 + 1, limit))
    y1 = draw(st.integers(y0 + 1, limit))
    return BBox(x0, y0, x1, y1)


@st.composite
def float_boxes(draw):
    coord = st.floats(-1e3, 1e3, allow_nan=False)
    x0, y0 = draw(coord), draw(coord)
    w = draw(st.floats(1e-2, 500))
    h = draw(st.floats(1e-2, 500))
    return BBox(x0, y0, x0 + w, y0 + h)


def test_iou_identical():
    b = BBox(3, 4, 20, 30)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap_matches_grid():
    a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("a,b,expected", [
    (BBox(0, 0, 10, 10), BBox(0, 0, 10, 10), 100),
    (BBox(0, 0, 5, 5), BBox(5, 0, 10, 5), 0),
    (BBox(0, 0, 10, 10), BBox(5, 5, 20, 20), 25),
])
def test_intersection_area_examples(a, b, expected):
    assert intersection_area(a, b) == expected


@given(int_boxes(), int_boxes())
def test_iou_matches_cell_counting(a, b):
    assert abs(iou(a, b) - grid_iou(a.as_tuple(), b.as_tuple())) <= 1e-9
    assert intersection_area(a, b) == grid_intersection(a.as_tuple(), b.as_tuple())


@given(float_boxes(), float_boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert intersection_area(a, b) <= min(a.area, b.area)


@given(int_boxes(), int_boxes())
def test_iou_one_iff_equal(a, b):
    assert (iou(a, b) == 1.0) == (a == b)


@given(st.lists(int_boxes(), min_size=1, max_size=6), st.lists(int_boxes(), min_size=1, max_size=6))
def test_iou_matrix_agrees_with_scalar(xs, ys):
    m = iou_matrix(np.array([b.as_tuple() for b in xs]), np.array([b.as_tuple() for b in ys]))
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


@pytest.mark.parametrize("coords", [(0, 0, 0, 5), (5, 0, 1, 3), (0, 0, math.inf, 1), (0, math.nan, 1, 1)])
def test_bbox_rejects_invalid(coords):
    with pytest.raises(ValidationError):
        BBox(*coords)


def test_class_label_namespaces():
    assert ClassLabel.voc("tvmonitor").name == "tv"
    assert ClassLabel.coco("couch").name == "couch"
    with pytest.raises(ValidationError):
        ClassLabel("voc", "couch")
    with pytest.raises(ValidationError):
        ClassLabel("coco", "sofa")


def test_image_record_bounds():
    ann = Annotation(BBox(0, 0, 60, 60), ClassLabel.voc("dog"))
    ImageRecord("a", 60, 60, [ann])
    with pytest.raises(ValidationError):
        ImageRecord("a", 50, 60, [ann])


def test_model_spec_and_feature_vector():
    assert ModelSpec("GoogleNet", 1024).feature_dim == 1024
    with pytest.raises(ValidationError):
        ModelSpec("x", 0)
    v = FeatureVector([1.0, 2.0])
    assert v.dim == 2
    with pytest.raises(ValidationError):
        FeatureVector([1.0, float("nan")])
