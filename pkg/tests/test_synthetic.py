import numpy as np
import pytest

from detens.core import VOC_CLASSES, BBox, iou
from detens.exceptions import ValidationError
from detens.learn import build_class_pools, train_svm
from detens.synthetic import SyntheticSpec, gen_synthetic, write_synthetic


def test_counts_and_labels():
    manifest, proposals, stores = gen_synthetic(SyntheticSpec(n_images=10, classes=3, seed=1))
    assert len(manifest) == 10
    labels = {a.label.name for r in manifest.records for a in r.ground_truth}
    assert labels <= set(VOC_CLASSES[:3])
    assert len(stores) == 2 and stores[0].feature_dim == 7
    assert sum(len(b) for b in proposals.values()) == len(stores[0])


def test_same_seed_byte_identical(tmp_path):
    spec = SyntheticSpec(n_images=8, noise=0.3, seed=42)
    a = write_synthetic(spec, tmp_path / "a")
    b = write_synthetic(spec, tmp_path / "b")
    for key in ("manifest", "proposals"):
        assert a[key].read_bytes() == b[key].read_bytes()
    for pa, pb in zip(a["features"], b["features"]):
        assert pa.read_bytes() == pb.read_bytes()
    c = write_synthetic(SyntheticSpec(n_images=8, noise=0.3, seed=43), tmp_path / "c")
    assert c["manifest"].read_bytes() != a["manifest"].read_bytes()


def test_proposals_contain_gt_and_jitters():
    manifest, proposals, stores = gen_synthetic(SyntheticSpec(n_images=15, seed=2))
    for rec in manifest.records:
        boxes = [BBox(*b) for b in proposals[rec.image_id]]
        for g in rec.ground_truth:
            assert g.bbox in boxes
            near = [b for b in boxes if iou(b, g.bbox) >= 0.5]
            assert len(near) >= 2
        for b in boxes:
            assert b.within(rec.width, rec.height)


def test_noise_only_changes_features():
    m0, p0, s0 = gen_synthetic(SyntheticSpec(n_images=5, noise=0.0, seed=3))
    m1, p1, s1 = gen_synthetic(SyntheticSpec(n_images=5, noise=0.5, seed=3))
    assert m0 == m1
    assert all(np.array_equal(p0[k], p1[k]) for k in p0)
    assert not np.array_equal(s0[0].matrix, s1[0].matrix)
    assert not np.array_equal(s1[0].matrix, s1[1].matrix)


def test_zero_noise_separable_for_every_class():
    spec = SyntheticSpec(n_images=30, classes=5, seed=4)
    manifest, proposals, stores = gen_synthetic(spec)
    for c in spec.classes:
        pools = build_class_pools(manifest, proposals, stores[0], c)
        neg = np.vstack(pools.negative_pools)
        m = train_svm(pools.positives, neg)
        assert np.all(m.decision_function(pools.positives) > 0)
        assert np.all(m.decision_function(neg) < 0)


@pytest.mark.parametrize("kwargs", [{"classes": ("dog", "zebra")}, {"n_images": 0}, {"noise": -1.0}, {"classes": 21}])
def test_invalid_spec(kwargs):
    with pytest.raises(ValidationError):
        SyntheticSpec(**kwargs)
