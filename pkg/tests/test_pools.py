import json

import numpy as np
import pytest

from detens.core import COCO_CLASSES, Annotation, BBox, ClassLabel, DatasetManifest, ImageRecord
from detens.exceptions import ParseError
from detens.ingest import DEFAULT_CLASS_MAP, FeatureStore, map_coco_labels
from detens.learn import (
    BBoxRegressor,
    SvmModel,
    build_class_pools,
    build_regression_set,
    load_regressors,
    load_svms,
    regressor_from_json,
    regressor_to_json,
    save_regressor,
    save_svm,
    svm_from_json,
    svm_to_json,
)


def store_for(proposals, dim=3):
    keys = [(img, i) for img, b in proposals.items() for i in range(len(b))]
    return FeatureStore("net", dim, keys, np.arange(len(keys) * dim, dtype=float).reshape(-1, dim))


def test_pools_positive_negative_split():
    anns = [Annotation(BBox(0, 0, 50, 50), ClassLabel.voc("dog")),
            Annotation(BBox(100, 0, 150, 50), ClassLabel.voc("dog"), difficult=True),
            Annotation(BBox(0, 100, 50, 150), ClassLabel.voc("cat"))]
    m = DatasetManifest("m", [ImageRecord("a", 200, 200, anns)])
    props = {"a": np.array([[0, 0, 50, 50], [5, 5, 50, 50], [30, 30, 80, 80], [0, 100, 50, 150],
                            [100, 0, 150, 50], [160, 160, 200, 200]], dtype=float)}
    pools = build_class_pools(m, props, store_for(props), "dog")
    assert pools.positive_keys == [("a", 0)]
    # (5,5,50,50) overlaps at 0.81 and (100,...) is the difficult dog: neither is a negative
    assert pools.negative_keys == [[("a", 2), ("a", 3), ("a", 5)]]


def test_unmapped_coco_classes_excluded():
    names = list(COCO_CLASSES)
    anns = [Annotation(BBox(i * 20, 0, i * 20 + 15, 15), ClassLabel.coco(n), source="coco2014")
            for i, n in enumerate(names)]
    rec = ImageRecord("c", 80 * 20, 100, anns, "coco2014")
    m = map_coco_labels(DatasetManifest("coco", [rec]))
    props = {"c": np.array([a.bbox.as_tuple() for a in rec.annotations] + [[0, 50, 40, 90]], dtype=float)}
    store = store_for(props)
    mapped = {c for c, _ in DEFAULT_CLASS_MAP.entries}
    unmapped_idx = {i for i, n in enumerate(names) if n not in mapped}
    assert len(unmapped_idx) == 60
    for voc in sorted({v for _, v in DEFAULT_CLASS_MAP.entries}):
        pools = build_class_pools(m, props, store, voc)
        used = {i for _, i in pools.positive_keys} | {i for keys in pools.negative_keys for _, i in keys}
        assert not used & unmapped_idx
        assert len(pools.positive_keys) == 1
        assert 80 in used


def test_regression_set_threshold():
    m = DatasetManifest("m", [ImageRecord("a", 100, 100, [Annotation(BBox(0, 0, 50, 50), ClassLabel.voc("dog"))])])
    props = {"a": np.array([[0, 0, 50, 50], [0, 0, 50, 40], [0, 0, 50, 25]], dtype=float)}
    X, P, G = build_regression_set(m, props, store_for(props), "dog")
    assert len(X) == 2 and np.all(G == [0, 0, 50, 50])


def f32(rng, *shape):
    return rng.normal(size=shape).astype(np.float32).astype(np.float64)


def test_svm_json_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = SvmModel("potted plant", f32(rng, 1024), -0.375, 1e-3, {"mined_rounds": 3})
    again = svm_from_json(svm_to_json(m, "GoogleNet"))
    assert again == m and again.metadata == m.metadata
    path = save_svm(m, tmp_path, "GoogleNet")
    assert path.name == "GoogleNet__potted_plant.svm.json"
    assert load_svms(tmp_path, "GoogleNet") == {"potted plant": m}
    assert load_svms(tmp_path, "VGG16") == {}


def test_regressor_json_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    reg = BBoxRegressor.identity(16, "dog", ridge_lambda=10.0)
    reg.coef_ = f32(rng, 4, 16)
    reg.intercept_ = rng.normal(size=4)
    again = regressor_from_json(regressor_to_json(reg))
    assert np.array_equal(again.coef_, reg.coef_) and np.array_equal(again.intercept_, reg.intercept_)
    assert again.get_params() == reg.get_params()
    save_regressor(reg, tmp_path, "net")
    assert list(load_regressors(tmp_path, "net")) == ["dog"]


def test_model_schema_checked():
    doc = json.loads(svm_to_json(SvmModel("dog", np.zeros(2), 0.0)))
    doc["schema"] = "detens.svm/99"
    with pytest.raises(ParseError):
        svm_from_json(json.dumps(doc))
