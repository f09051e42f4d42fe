"""Handle-based Laplacian surface deformation.

Handle vertices are hard constraints eliminated from the system; the free
vertices minimize ||L x - delta||^2 where delta are the differential
coordinates of the input mesh under a cotangent-weight Laplacian (uniform
fallback per degenerate triangle stencil).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .mesh import Mesh

DEGENERATE_AREA = 1e-12
DEGENERATE_ANGLE_DEG = 179.0
CG_TOL = 1e-10


class SolveError(RuntimeError):
    """Raised when the conjugate-gradient solve fails to converge."""

    def __init__(self, residual: float, coordinate: int):
        self.residual = residual
        self.coordinate = coordinate
        super().__init__(
            f"CG did not converge on coordinate {coordinate}; "
            f"achieved residual {residual:.3e}")


@dataclass(frozen=True)
class LaplacianSystem:
    laplacian: sp.csr_matrix       # rows sum to zero
    delta_coords: np.ndarray       # (n, 3) differential coordinates
    handle_constraints: dict[int, np.ndarray]
    rest_positions: np.ndarray     # input vertex positions (CG warm start)
    faces: np.ndarray


def cotangent_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric L = D - W with per-edge cotangent weights.

    Triangles with max angle > 179 deg or area < 1e-12 contribute uniform
    weights (1/2 per edge) instead of cotangents.
    """
    v, f = mesh.vertices, mesh.faces
    rows, cols, vals = [], [], []
    areas = mesh.face_areas()
    for corner in range(3):
        i = f[:, corner]
        j = f[:, (corner + 1) % 3]
        k = f[:, (corner + 2) % 3]
        # cotangent at corner k, opposite edge (i, j)
        u = v[i] - v[k]
        w = v[j] - v[k]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        dot = np.sum(u * w, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.where(cross > 0, dot / np.maximum(cross, 1e-300), 0.0)
        cos_k = dot / np.maximum(np.linalg.norm(u, axis=1)
                                 * np.linalg.norm(w, axis=1), 1e-300)
        bad = (areas < DEGENERATE_AREA) | (
            np.degrees(np.arccos(np.clip(cos_k, -1, 1)))
            > DEGENERATE_ANGLE_DEG)
        # a face with any bad corner switches entirely to uniform weights
        weight = np.where(bad, np.nan, 0.5 * cot)
        rows.append(i)
        cols.append(j)
        vals.append(weight)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    # mark faces flagged bad in any corner: replace all their edge weights
    bad_edges = np.isnan(vals)
    face_bad = bad_edges.reshape(3, -1).any(axis=0)
    vals = vals.reshape(3, -1)
    vals[:, face_bad] = 0.5
    vals = vals.ravel()
    n = mesh.n_vertices
    w = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    w = w + w.T
    d = sp.diags(np.asarray(w.sum(axis=1)).ravel())
    return (d - w).tocsr()


def uniform_laplacian(mesh: Mesh) -> sp.csr_matrix:
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    ones = np.ones(len(rows))
    adj = sp.coo_matrix((ones, (rows, cols)), shape=(n, n))
    adj = ((adj + adj.T) > 0).astype(np.float64)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) - adj).tocsr()


def build_system(mesh: Mesh, handles: dict[int, np.ndarray]) -> LaplacianSystem:
    """Cotangent system with delta computed from the input positions."""
    if not handles:
        raise ValueError("handle set must be non-empty")
    if len(handles) >= mesh.n_vertices:
        raise ValueError("handle set must be a strict subset of vertices")
    if min(handles) < 0 or max(handles) >= mesh.n_vertices:
        raise ValueError("handle index out of range")
    L = cotangent_laplacian(mesh)
    row_sums = np.abs(np.asarray(L.sum(axis=1)).ravel())
    assert row_sums.max(initial=0.0) < 1e-9, "Laplacian rows must sum to zero"
    delta = L @ mesh.vertices
    constraints = {int(i): np.asarray(p, dtype=np.float64).reshape(3)
                   for i, p in handles.items()}
    return LaplacianSystem(L, delta, constraints, mesh.vertices, mesh.faces)


def solve(system: LaplacianSystem, max_iter_factor: int = 10) -> Mesh:
    """Least-squares solve for the free vertices; handles placed exactly.

    Per-coordinate sparse normal equations solved by conjugate gradient
    (tolerance 1e-10, at most 10 n iterations); raises SolveError with the
    achieved residual on non-convergence.
    """
    n = system.laplacian.shape[0]
    handle_idx = np.array(sorted(system.handle_constraints), dtype=np.int64)
    free_idx = np.setdiff1d(np.arange(n), handle_idx)
    targets = np.array([system.handle_constraints[i] for i in handle_idx])

    A = system.laplacian[:, free_idx]
    B = system.laplacian[:, handle_idx]
    rhs = system.delta_coords - B @ targets
    AtA = (A.T @ A).tocsr()
    out = np.empty((n, 3))
    out[handle_idx] = targets
    x0 = system.rest_positions[free_idx]
    maxiter = max(max_iter_factor * n, 100)
    for c in range(3):
        b = A.T @ rhs[:, c]
        x, info = cg(AtA, b, x0=x0[:, c], rtol=CG_TOL, atol=0.0,
                     maxiter=maxiter)
        if info != 0:
            residual = float(np.linalg.norm(AtA @ x - b))
            raise SolveError(residual, c)
        out[free_idx, c] = x
    return Mesh(out, system.faces)


def solve_dense(system: LaplacianSystem) -> Mesh:
    """Dense least-squares oracle for small meshes (test cross-check)."""
    n = system.laplacian.shape[0]
    handle_idx = np.array(sorted(system.handle_constraints), dtype=np.int64)
    free_idx = np.setdiff1d(np.arange(n), handle_idx)
    targets = np.array([system.handle_constraints[i] for i in handle_idx])
    L = system.laplacian.toarray()
    A = L[:, free_idx]
    rhs = system.delta_coords - L[:, handle_idx] @ targets
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    out = np.empty((n, 3))
    out[handle_idx] = targets
    out[free_idx] = sol
    return Mesh(out, system.faces)


def dump_matrix_market(path: str, system: LaplacianSystem):
    """Diagnostic dump of the sparse Laplacian (debug flag support)."""
    from scipy.io import mmwrite
    mmwrite(path, system.laplacian)
