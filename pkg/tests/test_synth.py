"""Synthetic garment generation, occupancy labels, shells and persistence."""

import numpy as np
import pytest

from garmentrec.mesh import Mesh
from garmentrec.synth import (CATEGORY_HEM_STRETCH, SynthGarment, generate,
                              load_garment, occupancy_labels, read_pgm,
                              render_silhouette, save_garment,
                              shell_occupancy_field, thicken_mesh, write_pgm)
from garmentrec.template import CATEGORY_LINES, ClothCategory

from conftest import unit_sphere_mesh


def test_generate_is_deterministic_per_seed():
    a = generate(ClothCategory.LONG_TROUSERS, 0.1, 0.002, seed=5)
    b = generate(ClothCategory.LONG_TROUSERS, 0.1, 0.002, seed=5)
    c = generate(ClothCategory.LONG_TROUSERS, 0.1, 0.002, seed=6)
    np.testing.assert_array_equal(a.ground_truth_mesh.vertices,
                                  b.ground_truth_mesh.vertices)
    assert not np.array_equal(a.ground_truth_mesh.vertices,
                              c.ground_truth_mesh.vertices)


@pytest.mark.parametrize("category", list(ClothCategory))
def test_generate_invariants_per_category(category):
    g = generate(category, 0.1, 0.0, seed=20)
    assert g.category is category
    assert {a.kind for a in g.annotations} == CATEGORY_LINES[category]
    assert g.closed_mesh.is_watertight()
    assert g.ground_truth_mesh.n_faces > 0


def test_generate_rejects_negative_amplitudes():
    with pytest.raises(ValueError):
        generate(ClothCategory.LONG_SKIRT, -0.1, 0.0)
    with pytest.raises(ValueError):
        generate(ClothCategory.LONG_SKIRT, 0.0, -0.1)


def test_hem_stretch_orders_skirt_lengths():
    assert CATEGORY_HEM_STRETCH[ClothCategory.LONG_SKIRT] > \
        CATEGORY_HEM_STRETCH[ClothCategory.SHORT_SKIRT]
    long_skirt = generate(ClothCategory.LONG_SKIRT, 0.0, 0.0, seed=0)
    short_skirt = generate(ClothCategory.SHORT_SKIRT, 0.0, 0.0, seed=0)
    assert long_skirt.ground_truth_mesh.vertices[:, 1].min() < \
        short_skirt.ground_truth_mesh.vertices[:, 1].min()


def test_annotations_hug_the_garment_surface():
    g = generate(ClothCategory.NONE_SLEEVE_DRESS, 0.05, 0.0, seed=3)
    from garmentrec.register import SurfaceLocator
    loc = SurfaceLocator(g.ground_truth_mesh)
    for ann in g.annotations:
        _, dist, _ = loc.query(ann.points.points)
        assert dist.max() < 0.01


def test_thicken_mesh_closes_open_surfaces():
    open_strip = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
                      [[0, 1, 2], [1, 3, 2]])
    solid = thicken_mesh(open_strip, 0.05)
    assert solid.is_watertight()
    assert solid.n_vertices == 8
    # outward orientation: positive enclosed volume
    a, b, c = solid.face_corners()
    volume = float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)
    assert volume > 0


def test_occupancy_labels_match_analytic_sphere():
    sphere = unit_sphere_mesh(32)
    garment = generate(ClothCategory.SHORT_SKIRT, 0.0, 0.0, seed=1)
    fake = SynthGarment(garment.category, sphere, sphere, garment.pose,
                        garment.annotations, 0)
    pts, labels = occupancy_labels(fake, 2000, seed=2)
    assert len(pts) == 2000
    assert np.isin(labels, (0, 1)).all()
    r = np.linalg.norm(pts, axis=1)
    clear = np.abs(r - 1.0) > 0.02  # outside the faceting shell
    np.testing.assert_array_equal(labels[clear], (r[clear] <= 1.0))


def test_occupancy_labels_deterministic():
    g = generate(ClothCategory.SHORT_TROUSERS, 0.05, 0.0, seed=4)
    a = occupancy_labels(g, 300, seed=7)
    b = occupancy_labels(g, 300, seed=7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_render_silhouette_covers_projection():
    g = generate(ClothCategory.LONG_SLEEVE_COAT, 0.0, 0.0, seed=2)
    desc = render_silhouette(g, size=64)
    assert desc.raster.shape == (64, 64)
    frac = desc.raster.mean()
    assert 0.05 < frac < 0.95


def test_shell_field_level_set_tracks_surface():
    sphere = unit_sphere_mesh(32)
    field = shell_occupancy_field(sphere, delta=0.0, width=0.02,
                                  n_samples=20000, seed=0)
    on = sphere.vertices[:200]
    vals = field.evaluate(on)
    # individual values wobble with the surface sampling; the level set
    # stays centred on the surface
    np.testing.assert_allclose(vals, 0.5, atol=0.3)
    assert abs(vals.mean() - 0.5) < 0.02
    inside = np.zeros((1, 3))
    outside = np.array([[1.5, 0.0, 0.0]])
    assert field.evaluate(inside)[0] == 1.0
    assert field.evaluate(outside)[0] == 0.0


def test_shell_field_grid_fast_path_matches_pointwise():
    sphere = unit_sphere_mesh(24)
    field = shell_occupancy_field(sphere, delta=0.0, width=0.02,
                                  n_samples=20000, seed=0)
    axes = [np.linspace(-1.3, 1.3, 40)] * 3
    fast = field.evaluate_grid(*axes)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    exact = field.evaluate(pts).reshape(40, 40, 40)
    np.testing.assert_allclose(fast, exact, atol=1e-12)


def test_pgm_roundtrip(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=13))
    raster = (rng.random((32, 32)) > 0.5).astype(np.uint8)
    path = str(tmp_path / "s.pgm")
    write_pgm(path, raster)
    np.testing.assert_array_equal(read_pgm(path), raster)


def test_save_load_garment_roundtrip(tmp_path):
    g = generate(ClothCategory.SHORT_SLEEVE_COAT, 0.1, 0.001, seed=8)
    d = str(tmp_path / "g000")
    save_garment(d, g, {"seed": 8})
    back = load_garment(d)
    assert back.category is g.category
    np.testing.assert_allclose(back.ground_truth_mesh.vertices,
                               g.ground_truth_mesh.vertices, atol=1e-7)
    np.testing.assert_array_equal(back.ground_truth_mesh.faces,
                                  g.ground_truth_mesh.faces)
    np.testing.assert_allclose(back.pose.theta, g.pose.theta, atol=1e-12)
    assert {a.kind for a in back.annotations} == {a.kind for a in g.annotations}
    for a, b in zip(g.annotations, back.annotations):
        np.testing.assert_allclose(a.points.points, b.points.points, atol=1e-7)


def test_load_garment_rejects_missing_directory(tmp_path):
    with pytest.raises(Exception):
        load_garment(str(tmp_path / "nope"))
