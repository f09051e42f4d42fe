"""Occupancy fields, grid sampling and marching-cubes surface extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .mesh import Mesh, ScalarGrid

DEFAULT_ISO = 0.5
DEFAULT_RESOLUTION = 64
MIN_RESOLUTION = 8


@dataclass(frozen=True)
class OccupancyField:
    """Scalar inside-probability over 3-space, values in [0, 1].

    evaluate maps (n, 3) points to (n,) probabilities. evaluate_grid, when
    present, is a fast path taking the three lattice axes.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    provenance: str
    evaluate_grid: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None


def sphere_field(center, radius: float, width: float = 0.05) -> OccupancyField:
    """Analytic sphere occupancy with a linear ramp of the given width
    across the boundary (exact 0.5 level set at |p - c| = radius)."""
    c = np.asarray(center, dtype=np.float64)

    def evaluate(points):
        d = np.linalg.norm(np.asarray(points) - c, axis=-1)
        return np.clip(0.5 + (radius - d) / width, 0.0, 1.0)

    return OccupancyField(evaluate, "analytic")


def halfspace_field(axis: int, level: float, width: float = 0.05) -> OccupancyField:
    """Occupied below `level` along the given axis, linear ramp across it."""

    def evaluate(points):
        d = np.asarray(points)[..., axis] - level
        return np.clip(0.5 - d / width, 0.0, 1.0)

    return OccupancyField(evaluate, "analytic")


def sample_grid(field: OccupancyField, resolution: int,
                bounds: tuple[np.ndarray, np.ndarray],
                chunk: int = 65536) -> ScalarGrid:
    """Evaluate the field at the cell-corner lattice of an axis-aligned box."""
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}")
    lo = np.asarray(bounds[0], dtype=np.float64).reshape(3)
    hi = np.asarray(bounds[1], dtype=np.float64).reshape(3)
    if (hi - lo <= 0).any():
        raise ValueError("bounds must span a positive volume on every axis")
    spacing = (hi - lo) / (resolution - 1)
    axes = [lo[k] + spacing[k] * np.arange(resolution) for k in range(3)]
    if field.evaluate_grid is not None:
        values = np.asarray(field.evaluate_grid(*axes))
    else:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        values = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            values[s:s + chunk] = field.evaluate(pts[s:s + chunk])
    if values.min() < -1e-9 or values.max() > 1 + 1e-9:
        raise ValueError("occupancy values must lie in [0, 1]")
    return ScalarGrid((resolution,) * 3, lo, spacing,
                      np.clip(values, 0.0, 1.0))


def marching_cubes(grid: ScalarGrid, iso: float = DEFAULT_ISO) -> Mesh:
    """Extract the iso-surface with the standard 256-case table and linear
    edge interpolation. Faces are oriented so normals point toward lower
    occupancy (outward for inside-probability fields)."""
    v = grid.values
    rx, ry, rz = grid.resolution
    cx, cy, cz = rx - 1, ry - 1, rz - 1
    if min(cx, cy, cz) < 1:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    inside = v < iso  # "below iso" bit convention of the classic table
    cube_index = np.zeros((cx, cy, cz), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        cube_index |= (inside[dx:dx + cx, dy:dy + cy, dz:dz + cz]
                       .astype(np.int64) << bit)

    active = np.flatnonzero(EDGE_TABLE[cube_index.ravel()])
    if active.size == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    ci = cube_index.ravel()[active]
    cell_ijk = np.stack(np.unravel_index(active, (cx, cy, cz)), axis=1)

    # global lattice-edge ids: axis * n_lattice + linear index of the low corner
    n_lattice = rx * ry * rz

    def edge_global_ids(local_edge: int) -> np.ndarray:
        a, b = EDGE_CORNERS[local_edge]
        pa = cell_ijk + CORNER_OFFSETS[a]
        pb = cell_ijk + CORNER_OFFSETS[b]
        low = np.minimum(pa, pb)
        axis = int(np.flatnonzero(CORNER_OFFSETS[a] != CORNER_OFFSETS[b])[0])
        lin = (low[:, 0] * ry + low[:, 1]) * rz + low[:, 2]
        return axis * n_lattice + lin

    edge_ids = np.stack([edge_global_ids(e) for e in range(12)], axis=1)

    tris = TRI_TABLE[ci]                      # (K, 16)
    slot = tris[:, :15].reshape(-1, 5, 3)     # 5 candidate triangles per cell
    valid = slot[:, :, 0] >= 0
    cell_rep = np.repeat(np.arange(len(active)), 5).reshape(-1, 5)
    tri_cells = cell_rep[valid]
    tri_edges = slot[valid]                   # (T, 3) local edge indices
    face_edge_ids = edge_ids[tri_cells[:, None], tri_edges]

    used, inverse = np.unique(face_edge_ids.ravel(), return_inverse=True)
    faces = inverse.reshape(-1, 3)

    # interpolated vertex per unique lattice edge
    axis = used // n_lattice
    lin = used % n_lattice
    p0 = np.stack([lin // (ry * rz), (lin // rz) % ry, lin % rz], axis=1)
    p1 = p0.copy()
    p1[np.arange(len(p1)), axis] += 1
    v0 = v[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = v[p1[:, 0], p1[:, 1], p1[:, 2]]
    denom = v1 - v0
    t = np.where(np.abs(denom) > 1e-300, (iso - v0) / np.where(denom == 0, 1, denom), 0.5)
    t = np.clip(t, 0.0, 1.0)
    pos0 = grid.origin + grid.spacing * p0
    pos1 = grid.origin + grid.spacing * p1
    verts = pos0 + t[:, None] * (pos1 - pos0)

    # drop zero-area slivers where two triangle corners welded together
    ok = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
          & (faces[:, 0] != faces[:, 2]))
    faces = faces[ok]
    # with the "below iso" bit convention the table's winding already faces
    # the below-iso side, i.e. toward lower occupancy
    return Mesh(verts, faces)


def extract_surface(field: OccupancyField, resolution: int,
                    bounds, iso: float = DEFAULT_ISO) -> Mesh:
    return marching_cubes(sample_grid(field, resolution, bounds), iso)


def dump_grid(path_prefix: str, grid: ScalarGrid):
    """Debug dump: raw float64 values plus a JSON header."""
    grid.values.astype("<f8").tofile(path_prefix + ".raw")
    with open(path_prefix + ".json", "w") as fh:
        json.dump({
            "resolution": list(grid.resolution),
            "origin": grid.origin.tolist(),
            "spacing": grid.spacing.tolist(),
            "dtype": "<f8",
            "order": "C",
        }, fh, indent=1, sort_keys=True)
