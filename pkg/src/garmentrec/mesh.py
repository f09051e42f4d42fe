"""Triangle meshes, point clouds and scalar grids shared by the whole pipeline.

All geometry lives in canonical model units: pipeline meshes are normalized so
the template bounding-box diagonal is ~1, and every distance threshold in the
package is interpreted in that unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA_EPS = 1e-12
FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle surface.

    vertices: (n, 3) float positions.
    faces: (m, 3) int vertex indices, counter-clockwise = outward normal.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            ).any():
                raise ValueError("face references the same vertex twice")
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "faces", _freeze(f))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_normals(self, normalize: bool = True) -> np.ndarray:
        a, b, c = self.face_corners()
        n = np.cross(b - a, c - a)
        if normalize:
            ln = np.linalg.norm(n, axis=1, keepdims=True)
            with np.errstate(invalid="ignore"):
                n = np.where(ln > DEGENERATE_AREA_EPS, n / ln, 0.0)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalize=False), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def boundary_edges(self) -> np.ndarray:
        """Undirected edges incident to exactly one face, as sorted pairs."""
        e = _directed_edges(self.faces)
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def is_watertight(self) -> bool:
        e = np.sort(_directed_edges(self.faces), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool((counts == 2).all())

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(extract_edges(self)) + self.n_faces

    def translated(self, t) -> "Mesh":
        return Mesh(self.vertices + np.asarray(t, dtype=np.float64), self.faces)


@dataclass(frozen=True)
class PointCloud:
    """Raw 3D point set with optional per-point unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", _freeze(p))
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(p):
                raise ValueError("normals length must match points")
            lens = np.linalg.norm(n, axis=1)
            if len(n) and np.abs(lens - 1.0).max() > 1e-6:
                raise ValueError("normals must have unit length within 1e-6")
            object.__setattr__(self, "normals", _freeze(n))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ScalarGrid:
    """Dense scalar samples on an axis-aligned lattice of cell corners."""

    resolution: tuple[int, int, int]
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        res = tuple(int(r) for r in np.atleast_1d(self.resolution).repeat(
            3 if np.ndim(self.resolution) == 0 else 1)[:3])
        if any(r <= 0 for r in res):
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(
            self, "origin", _freeze(np.asarray(self.origin, dtype=np.float64).reshape(3))
        )
        sp = np.asarray(self.spacing, dtype=np.float64)
        sp = np.full(3, float(sp)) if sp.ndim == 0 else sp.reshape(3)
        if (sp <= 0).any():
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "spacing", _freeze(sp))
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size != res[0] * res[1] * res[2]:
            raise ValueError("values length must equal product of resolutions")
        object.__setattr__(self, "values", _freeze(vals.reshape(res)))

    def corner_positions(self) -> np.ndarray:
        """(rx*ry*rz, 3) lattice point positions in C order."""
        axes = [self.origin[k] + self.spacing[k] * np.arange(self.resolution[k])
                for k in range(3)]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)


def _directed_edges(faces: np.ndarray) -> np.ndarray:
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def extract_edges(mesh: Mesh) -> np.ndarray:
    """Each undirected edge once, pairs sorted ascending, lexicographic order."""
    e = np.sort(_directed_edges(mesh.faces), axis=1)
    return np.unique(e, axis=0)


def compute_vertex_normals(mesh: Mesh, return_degenerate: bool = False):
    """Area-weighted average of incident face normals, normalized.

    A vertex whose incident faces are all degenerate (area < 1e-12) gets the
    fallback normal (0, 0, 1); the optional second return flags those vertices.
    """
    fn = mesh.face_normals(normalize=False)  # length = 2 * area
    areas = 0.5 * np.linalg.norm(fn, axis=1)
    ok = areas >= DEGENERATE_AREA_EPS
    acc = np.zeros((mesh.n_vertices, 3))
    for k in range(3):
        np.add.at(acc, mesh.faces[ok, k], fn[ok])
    lens = np.linalg.norm(acc, axis=1)
    degenerate = lens <= DEGENERATE_AREA_EPS
    out = np.where(degenerate[:, None], FALLBACK_NORMAL,
                   acc / np.where(degenerate, 1.0, lens)[:, None])
    if return_degenerate:
        return out, degenerate
    return out


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def subdivide_region(mesh: Mesh, face_subset, levels: int = 1) -> Mesh:
    """Midpoint-split the selected faces, `levels` times.

    Non-selected faces that share a split edge are bisected (red-green style)
    so no hanging vertices remain; original vertex positions are untouched.
    """
    face_subset = np.unique(np.asarray(list(face_subset), dtype=np.int64))
    if face_subset.size == 0:
        raise ValueError("face_subset must not be empty")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if face_subset.min() < 0 or face_subset.max() >= mesh.n_faces:
        raise ValueError("face_subset index out of range")

    m, _ = subdivide_region_with_tracking(mesh, face_subset, levels)
    return m


def subdivide_region_with_tracking(mesh: Mesh, face_subset, levels: int):
    """Like subdivide_region but also returns (edge endpoints) per new vertex.

    Returns (mesh, parents) where parents is a (n_new_total, 2) int array; rows
    for original vertices are (i, i), rows for inserted midpoints name the two
    endpoint vertices of the split edge (indices into the *output* ordering).
    """
    verts = [mesh.vertices]
    parents = [np.stack([np.arange(mesh.n_vertices)] * 2, axis=1)]
    faces = mesh.faces.copy()
    selected = np.zeros(mesh.n_faces, dtype=bool)
    selected[np.asarray(list(face_subset), dtype=np.int64)] = True
    n = mesh.n_vertices
    vert_list = mesh.vertices

    for _ in range(levels):
        midpoint: dict[tuple[int, int], int] = {}
        new_pts = []
        new_parents = []

        def mid(i, j):
            nonlocal n
            key = _edge_key(i, j)
            if key not in midpoint:
                midpoint[key] = n
                new_pts.append(0.5 * (vert_list[i] + vert_list[j]))
                new_parents.append(key)
                n += 1
            return midpoint[key]

        # midpoints exist exactly on edges of selected faces
        for fi in np.flatnonzero(selected):
            a, b, c = faces[fi]
            mid(a, b), mid(b, c), mid(c, a)

        out_faces = []
        out_selected = []
        for fi in range(len(faces)):
            a, b, c = faces[fi]
            mids = [midpoint.get(_edge_key(a, b)),
                    midpoint.get(_edge_key(b, c)),
                    midpoint.get(_edge_key(c, a))]
            k = sum(m is not None for m in mids)
            if k == 0:
                out_faces.append((a, b, c))
                out_selected.append(False)
            elif k == 3:
                mab, mbc, mca = mids
                sel = bool(selected[fi])
                for tri in ((a, mab, mca), (mab, b, mbc), (mca, mbc, c),
                            (mab, mbc, mca)):
                    out_faces.append(tri)
                    out_selected.append(sel)
            else:
                # green split: rotate so that the first edge holds a midpoint
                corners = (a, b, c)
                for r in range(3):
                    if mids[r] is not None:
                        a2, b2, c2 = (corners[r], corners[(r + 1) % 3],
                                      corners[(r + 2) % 3])
                        m2 = (mids[r], mids[(r + 1) % 3], mids[(r + 2) % 3])
                        break
                if k == 1:
                    out_faces += [(a2, m2[0], c2), (m2[0], b2, c2)]
                    out_selected += [False, False]
                else:
                    # second midpoint on one of the remaining edges
                    if m2[1] is not None:
                        out_faces += [(m2[0], b2, m2[1]), (a2, m2[0], c2),
                                      (m2[0], m2[1], c2)]
                    else:
                        out_faces += [(a2, m2[0], m2[2]), (m2[0], b2, c2),
                                      (m2[2], m2[0], c2)]
                    out_selected += [False, False, False]

        if new_pts:
            verts.append(np.asarray(new_pts))
            parents.append(np.asarray(new_parents, dtype=np.int64))
        vert_list = np.concatenate(verts)
        faces = np.asarray(out_faces, dtype=np.int64)
        selected = np.asarray(out_selected, dtype=bool)

    return Mesh(vert_list, faces), np.concatenate(parents)


def sample_surface(mesh: Mesh, n: int, seed: int = 0) -> PointCloud:
    """Area-weighted uniform surface sampling, deterministic for a fixed seed.

    Normals are copied from the sampled face.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    rng = np.random.Generator(np.random.Philox(key=seed))
    fidx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    su = np.sqrt(r1)
    w0, w1, w2 = 1.0 - su, su * (1.0 - r2), su * r2
    a, b, c = mesh.face_corners()
    pts = (w0[:, None] * a[fidx] + w1[:, None] * b[fidx] + w2[:, None] * c[fidx])
    normals = mesh.face_normals()[fidx]
    # degenerate faces carry zero normals; they have zero sampling probability
    return PointCloud(pts, normals)
