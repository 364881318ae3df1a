import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detens.core import BBox, iou
from detens.exceptions import DegenerateBoxError, SolverError, ValidationError
from detens.learn import (
    BBoxRegressor,
    RegressionTarget,
    apply_deltas,
    apply_regression,
    compute_regression_targets,
    regression_targets,
    train_bbox_regressor,
)
from oracles import lstsq_with_bias


@st.composite
def boxes(draw):
    x0 = draw(st.floats(0, 500))
    y0 = draw(st.floats(0, 500))
    return BBox(x0, y0, x0 + draw(st.floats(1, 300)), y0 + draw(st.floats(1, 300)))


def test_identity_targets():
    b = BBox(5, 6, 40, 50)
    assert compute_regression_targets(b, b) == RegressionTarget(0, 0, 0, 0)


def test_hand_example():
    p = BBox(5, 5, 15, 15)
    g = BBox(5, 5, 25, 15)
    t = compute_regression_targets(p, g)
    assert t.as_array() == pytest.approx([0.5, 0.0, math.log(2), 0.0], abs=1e-15)


def test_zero_deltas_leave_box():
    p = BBox(3, 4, 30, 44)
    assert apply_regression(p, RegressionTarget(0, 0, 0, 0)) == p


def test_doubling_width_keeps_centre():
    p = BBox(10, 10, 30, 20)
    out = apply_regression(p, RegressionTarget(0, 0, math.log(2), 0))
    assert out.as_tuple() == pytest.approx((0, 10, 40, 20))


@given(boxes(), boxes())
def test_round_trip(p, g):
    out = apply_regression(p, compute_regression_targets(p, g))
    assert np.max(np.abs(out.as_array() - g.as_array())) <= 1e-9


def test_clipping_to_image():
    out = apply_regression(BBox(80, 80, 100, 100), RegressionTarget(1.0, 1.0, 0, 0), image_size=(110, 110))
    assert out.as_tuple() == (100, 100, 110, 110)


def test_extreme_targets_degenerate():
    with pytest.raises(DegenerateBoxError):
        apply_regression(BBox(0, 0, 10, 10), RegressionTarget(0, 0, -800.0, 0))


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    P = np.column_stack([rng.uniform(0, 100, 20), rng.uniform(0, 100, 20)])
    P = np.hstack([P, P + rng.uniform(1, 50, (20, 2))])
    G = P + rng.normal(scale=2, size=P.shape)
    G[:, 2:] = np.maximum(G[:, 2:], G[:, :2] + 1)
    T = regression_targets(P, G)
    for i in range(20):
        assert T[i] == pytest.approx(compute_regression_targets(BBox(*P[i]), BBox(*G[i])).as_array(), abs=1e-12)
    assert apply_deltas(P, T) == pytest.approx(G, abs=1e-9)


def test_planted_map_recovered_with_zero_lambda():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 8))
    W = rng.normal(size=(4, 8))
    c = rng.normal(size=4)
    T = X @ W.T + c
    reg = BBoxRegressor(ridge_lambda=0).fit(X, T)
    assert np.max(np.abs(reg.predict(X) - T)) < 1e-6
    assert np.allclose(reg.coef_, W, atol=1e-8)


def test_zero_lambda_matches_lstsq_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 10))
    T = rng.normal(size=(120, 4))
    reg = BBoxRegressor(ridge_lambda=0).fit(X, T)
    W, c = lstsq_with_bias(X, T)
    assert np.linalg.norm(reg.coef_ - W) / np.linalg.norm(W) <= 1e-8
    assert np.linalg.norm(reg.intercept_ - c) / np.linalg.norm(c) <= 1e-8


def test_huge_lambda_keeps_proposals():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 6))
    P = np.tile([10.0, 10.0, 60.0, 80.0], (50, 1))
    G = P + rng.normal(scale=3, size=P.shape)
    reg = train_bbox_regressor(X, P, G, ridge_lambda=1e12)
    assert np.max(np.abs(reg.coef_)) < 1e-9 and np.max(np.abs(reg.intercept_)) < 1e-9
    assert reg.transform_boxes(X, P) == pytest.approx(P, abs=1e-6)


def test_singular_without_ridge():
    X = np.ones((10, 3))
    with pytest.raises(SolverError, match="ridge_lambda > 0"):
        BBoxRegressor(ridge_lambda=0).fit(X, np.zeros((10, 4)))


def test_needs_training_pairs():
    with pytest.raises(ValidationError):
        train_bbox_regressor(np.empty((0, 3)), np.empty((0, 4)), np.empty((0, 4)))
    with pytest.raises(ValidationError):
        BBoxRegressor(ridge_lambda=-1).fit(np.ones((3, 1)), np.zeros((3, 4)))


def jittered_problem(n=300, seed=4):
    """Proposals jittered around GT, with the exact targets as features plus noise."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 300, size=(n, 2))
    wh = rng.uniform(30, 150, size=(n, 2))
    G = np.hstack([xy, xy + wh])
    P = G + rng.normal(scale=0.12, size=(n, 4)) * np.hstack([wh, wh])
    P[:, 2:] = np.maximum(P[:, 2:], P[:, :2] + 5)
    T = regression_targets(P, G)
    X = np.hstack([T + rng.normal(scale=0.01, size=T.shape), rng.normal(size=(n, 3))])
    return X, P, G


def test_mean_iou_improves():
    X, P, G = jittered_problem()
    reg = train_bbox_regressor(X, P, G, ridge_lambda=1.0)
    out = reg.transform_boxes(X, P)
    before = np.mean([iou(BBox(*p), BBox(*g)) for p, g in zip(P, G)])
    after = np.mean([iou(BBox(*o), BBox(*g)) for o, g in zip(out, G)])
    assert after > before


def test_identity_regressor():
    reg = BBoxRegressor.identity(5, "dog")
    P = np.array([[1.0, 2.0, 30.0, 40.0]])
    assert np.array_equal(reg.transform_boxes(np.ones((1, 5)), P), P)
    assert reg.get_params() == {"ridge_lambda": 1000.0, "class_name": "dog"}
