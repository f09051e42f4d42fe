"""Cotangent/uniform Laplacians and handle-based least-squares deformation."""

import numpy as np
import pytest
import scipy.sparse as sp

from garmentrec.laplacian import (build_system, cotangent_laplacian,
                                  solve, solve_dense, uniform_laplacian)
from garmentrec.mesh import Mesh


def grid_mesh(nx=10, ny=10):
    """Planar triangulated grid with mild height noise (non-trivial cotans)."""
    xs, ys = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny),
                         indexing="ij")
    rng = np.random.Generator(np.random.Philox(key=12))
    z = 0.05 * rng.normal(size=xs.shape)
    verts = np.stack([xs, ys, z], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = a + 1
            c = a + ny
            d = c + 1
            faces += [(a, b, d), (a, d, c)]
    return Mesh(verts, np.asarray(faces))


def test_laplacian_rows_sum_to_zero():
    m = grid_mesh()
    for L in (cotangent_laplacian(m), uniform_laplacian(m)):
        rows = np.asarray(L.sum(axis=1)).ravel()
        np.testing.assert_allclose(rows, 0.0, atol=1e-10)
        assert (abs(L - L.T) > 1e-12).nnz == 0  # symmetric


def test_uniform_laplacian_diagonal_is_degree():
    m = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
             [[0, 1, 2], [1, 3, 2]])
    L = uniform_laplacian(m)
    np.testing.assert_array_equal(L.diagonal(), [2, 3, 3, 2])


def test_degenerate_faces_fall_back_to_uniform_weights():
    # zero-area sliver triangle must not emit infinite cotangents
    m = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 1e-15], [0.5, 1.0, 0.0]],
             [[0, 1, 2], [0, 3, 1]])
    L = cotangent_laplacian(m)
    assert np.isfinite(L.toarray()).all()


def test_build_system_validation():
    m = grid_mesh(4, 4)
    with pytest.raises(ValueError):
        build_system(m, {})
    with pytest.raises(ValueError):
        build_system(m, {99: np.zeros(3)})
    with pytest.raises(ValueError):
        build_system(m, {i: m.vertices[i] for i in range(m.n_vertices)})


def test_handles_are_interpolated_exactly():
    m = grid_mesh()
    handles = {0: np.array([0.3, -0.1, 0.2]),
               55: np.array([0.5, 0.5, 0.4]),
               99: np.array([1.2, 1.0, 0.0])}
    out = solve(build_system(m, handles))
    for i, target in handles.items():
        np.testing.assert_array_equal(out.vertices[i], target)


def test_rest_handles_are_a_fixed_point():
    m = grid_mesh()
    handles = {i: m.vertices[i] for i in (0, 9, 90, 99, 45)}
    out = solve(build_system(m, handles))
    assert np.abs(out.vertices - m.vertices).max() < 1e-8


def test_translation_equivariance():
    m = grid_mesh()
    t = np.array([0.7, -1.3, 2.0])
    handles = {0: m.vertices[0] + [0.1, 0, 0.05], 99: m.vertices[99]}
    moved = {i: p + t for i, p in handles.items()}
    out_a = solve(build_system(m, handles))
    out_b = solve(build_system(m, moved))
    assert np.abs(out_b.vertices - (out_a.vertices + t)).max() < 1e-8


def test_sparse_matches_dense_oracle():
    m = grid_mesh()
    handles = {0: m.vertices[0] + [0.2, 0.1, 0.0],
               99: m.vertices[99] - [0.0, 0.2, 0.1]}
    system = build_system(m, handles)
    sparse = solve(system).vertices
    dense = solve_dense(system).vertices
    scale = np.abs(dense).max()
    assert np.abs(sparse - dense).max() / scale < 1e-7


def test_solution_minimizes_delta_residual():
    # perturbing any free vertex of the solution must not lower the objective
    m = grid_mesh(6, 6)
    handles = {0: m.vertices[0] + [0.15, 0.0, 0.1],
               35: m.vertices[35]}
    system = build_system(m, handles)
    out = solve(system)
    L = system.laplacian

    def objective(v):
        return float(np.sum((L @ v - system.delta_coords) ** 2))

    base = objective(out.vertices)
    rng = np.random.Generator(np.random.Philox(key=3))
    for _ in range(10):
        v = out.vertices.copy()
        i = int(rng.integers(1, 35))
        v[i] += rng.normal(scale=1e-3, size=3)
        assert objective(v) >= base - 1e-12
