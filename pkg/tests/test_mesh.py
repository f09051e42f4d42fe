"""Mesh container, connectivity queries, subdivision and surface sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garmentrec.mesh import (Mesh, PointCloud, ScalarGrid,
                             compute_vertex_normals, extract_edges,
                             sample_surface, subdivide_region,
                             subdivide_region_with_tracking)

TETRA_V = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
# outward-oriented tetrahedron
TETRA_F = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def tetra():
    return Mesh(TETRA_V, TETRA_F)


def test_mesh_rejects_out_of_range_face_index():
    with pytest.raises(ValueError):
        Mesh(TETRA_V, [[0, 1, 4]])


def test_mesh_rejects_repeated_vertex_in_face():
    with pytest.raises(ValueError):
        Mesh(TETRA_V, [[0, 1, 1]])


def test_mesh_arrays_are_immutable():
    m = tetra()
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        m.faces[0, 0] = 2


def test_tetra_connectivity_and_area():
    m = tetra()
    assert m.n_vertices == 4 and m.n_faces == 4
    assert len(extract_edges(m)) == 6
    assert m.euler_characteristic() == 2
    assert m.is_watertight()
    assert len(m.boundary_edges()) == 0
    # three unit right triangles plus the diagonal face
    expected = 3 * 0.5 + 0.5 * np.sqrt(3)
    assert m.area() == pytest.approx(expected, rel=1e-12)


def test_single_triangle_boundary():
    m = Mesh(TETRA_V[:3], [[0, 1, 2]])
    assert not m.is_watertight()
    assert len(m.boundary_edges()) == 3
    np.testing.assert_array_equal(m.face_normals(), [[0.0, 0.0, 1.0]])


def test_face_normals_unit_length():
    m = tetra()
    lens = np.linalg.norm(m.face_normals(), axis=1)
    np.testing.assert_allclose(lens, 1.0, atol=1e-12)


def test_vertex_normals_point_outward_on_tetra():
    m = tetra()
    n = compute_vertex_normals(m)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    centroid = TETRA_V.mean(axis=0)
    assert (np.sum(n * (TETRA_V - centroid), axis=1) > 0).all()


def test_vertex_normals_degenerate_fallback():
    m = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    n, degenerate = compute_vertex_normals(m, return_degenerate=True)
    assert degenerate.all()
    np.testing.assert_array_equal(n, np.tile([0.0, 0.0, 1.0], (3, 1)))


def test_translated_moves_vertices_only():
    m = tetra().translated([1.0, -2.0, 3.0])
    np.testing.assert_allclose(m.vertices, TETRA_V + [1.0, -2.0, 3.0])
    np.testing.assert_array_equal(m.faces, TETRA_F)


def test_subdivide_region_full_tetra_preserves_surface():
    m = tetra()
    out = subdivide_region(m, np.arange(4), levels=1)
    assert out.n_faces == 16
    assert out.is_watertight()
    assert out.euler_characteristic() == 2
    assert out.area() == pytest.approx(m.area(), rel=1e-12)


def test_subdivide_region_partial_keeps_mesh_conforming():
    m = tetra()
    out = subdivide_region(m, [0], levels=1)
    # red face -> 4, each neighbour green-bisected at least once
    assert out.n_faces > 4
    assert out.is_watertight()
    assert out.area() == pytest.approx(m.area(), rel=1e-12)


def test_subdivide_tracking_parents_are_edge_midpoints():
    m = tetra()
    out, parents = subdivide_region_with_tracking(m, [0], levels=1)
    for i in range(m.n_vertices, out.n_vertices):
        a, b = parents[i]
        np.testing.assert_allclose(
            out.vertices[i], 0.5 * (out.vertices[a] + out.vertices[b]))


def test_subdivide_region_validation():
    m = tetra()
    with pytest.raises(ValueError):
        subdivide_region(m, [], levels=1)
    with pytest.raises(ValueError):
        subdivide_region(m, [0], levels=0)
    with pytest.raises(ValueError):
        subdivide_region(m, [9], levels=1)


def test_sample_surface_deterministic():
    m = tetra()
    a = sample_surface(m, 100, seed=3)
    b = sample_surface(m, 100, seed=3)
    c = sample_surface(m, 100, seed=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_sample_surface_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_surface(tetra(), 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9),
       st.integers(0, 2**31 - 1))
def test_sample_surface_points_lie_on_triangle(coords, seed):
    v = np.asarray(coords).reshape(3, 3)
    m = Mesh(v, [[0, 1, 2]])
    if m.area() < 1e-6:
        return
    pts = sample_surface(m, 50, seed=seed).points
    n = m.face_normals()[0]
    # in the triangle plane ...
    np.testing.assert_allclose((pts - v[0]) @ n, 0.0, atol=1e-9)
    # ... and inside the triangle (non-negative barycentric coordinates)
    basis = np.stack([v[1] - v[0], v[2] - v[0]], axis=1)
    bary, *_ = np.linalg.lstsq(basis, (pts - v[0]).T, rcond=None)
    assert (bary >= -1e-9).all()
    assert (bary.sum(axis=0) <= 1 + 1e-9).all()


def test_point_cloud_validates_normals():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [[2.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    pc = PointCloud([[0, 0, 0]], [[1.0, 0.0, 0.0]])
    assert len(pc) == 1


def test_scalar_grid_corner_positions():
    g = ScalarGrid((2, 2, 2), [0.0, 0.0, 0.0], [1.0, 2.0, 3.0], np.zeros(8))
    pts = g.corner_positions()
    assert pts.shape == (8, 3)
    np.testing.assert_array_equal(pts[0], [0, 0, 0])
    np.testing.assert_array_equal(pts[-1], [1, 2, 3])


def test_scalar_grid_validation():
    with pytest.raises(ValueError):
        ScalarGrid((2, 2, 2), [0, 0, 0], [1, 1, 1], np.zeros(7))
    with pytest.raises(ValueError):
        ScalarGrid((2, 2, 2), [0, 0, 0], [0.0, 1, 1], np.zeros(8))
