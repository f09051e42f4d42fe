"""Feature-line loops, annotations and the line fitting losses."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garmentrec.lines import (DEFAULT_LAMBDA_EDGE, FeatureLine,
                              FeatureLineAnnotation, LandmarkKind, edge_reg,
                              fitting_loss, laplacian_smooth_line, line_loss)
from garmentrec.mesh import PointCloud


def _loop(n=8, radius=1.0, center=(0.0, 0.0, 0.0)):
    t = 2 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(t),
                     np.full(n, center[1]),
                     center[2] + radius * np.sin(t)], axis=1)


def test_feature_line_requires_three_vertices_when_closed():
    with pytest.raises(ValueError):
        FeatureLine(LandmarkKind.NECK, [0, 1])
    fl = FeatureLine(LandmarkKind.NECK, [0, 1, 2])
    assert fl.closed


def test_annotation_rejects_empty():
    with pytest.raises(ValueError):
        FeatureLineAnnotation(LandmarkKind.NECK, PointCloud(np.empty((0, 3))))


def test_line_loss_zero_for_identical_sets():
    p = _loop()
    ann = FeatureLineAnnotation(LandmarkKind.WAIST, PointCloud(p))
    assert line_loss(p, ann) == 0.0


def test_line_loss_matches_brute_force():
    rng = np.random.Generator(np.random.Philox(key=2))
    pred = rng.normal(size=(9, 3))
    ann_pts = rng.normal(size=(13, 3))
    d2 = np.sum((pred[:, None] - ann_pts[None]) ** 2, axis=2)
    expected = d2.min(axis=1).mean() + d2.min(axis=0).mean()
    got = line_loss(pred, FeatureLineAnnotation(LandmarkKind.HEMLINE,
                                                PointCloud(ann_pts)))
    assert got == pytest.approx(expected, rel=1e-12)


def test_edge_reg_closed_loop_value():
    p = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    # four unit edges including the closing one
    assert edge_reg(p) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        edge_reg(p[:2])


def test_fitting_loss_combines_terms_with_default_weight():
    assert DEFAULT_LAMBDA_EDGE == 0.2
    p = _loop()
    ann = FeatureLineAnnotation(LandmarkKind.WAIST, PointCloud(p + 0.05))
    lines = [(LandmarkKind.WAIST, p)]
    expected = line_loss(p, ann) + 0.2 * edge_reg(p)
    assert fitting_loss(lines, [ann]) == pytest.approx(expected, rel=1e-12)


def test_fitting_loss_pairs_duplicate_kinds_by_centroid():
    left = _loop(center=(-1.0, 0.0, 0.0))
    right = _loop(center=(1.0, 0.0, 0.0))
    ann_l = FeatureLineAnnotation(LandmarkKind.WRIST, PointCloud(left))
    ann_r = FeatureLineAnnotation(LandmarkKind.WRIST, PointCloud(right))
    lines = [(LandmarkKind.WRIST, left), (LandmarkKind.WRIST, right)]
    # correct pairing makes the line term vanish regardless of order
    for anns in ([ann_l, ann_r], [ann_r, ann_l]):
        total = fitting_loss(lines, anns, lambda_edge=0.0)
        assert total == pytest.approx(0.0, abs=1e-15)


def test_fitting_loss_rejects_kind_mismatch():
    p = _loop()
    ann = FeatureLineAnnotation(LandmarkKind.NECK, PointCloud(p))
    with pytest.raises(ValueError):
        fitting_loss([(LandmarkKind.WAIST, p)], [ann])
    with pytest.raises(ValueError):
        fitting_loss([(LandmarkKind.NECK, p), (LandmarkKind.NECK, p)], [ann])


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 20), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_smoothing_preserves_centroid_and_shrinks_spread(n, iters, seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    p = rng.normal(size=(n, 3))
    out = laplacian_smooth_line(p, iters)
    np.testing.assert_allclose(out.mean(axis=0), p.mean(axis=0), atol=1e-9)
    before = np.linalg.norm(p - p.mean(axis=0), axis=1).max()
    after = np.linalg.norm(out - out.mean(axis=0), axis=1).max()
    assert after <= before + 1e-12


def test_smoothing_validates_input():
    with pytest.raises(ValueError):
        laplacian_smooth_line(np.zeros((2, 3)), 1)
