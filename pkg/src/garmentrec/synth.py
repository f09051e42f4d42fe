"""Synthetic garment generator: the desk-scale stand-in for scan data.

Each garment is the activated template posed at random, stretched per
category, offset outward from the body, and decorated with a band-limited
procedural wrinkle field. The generator also emits ground-truth feature-line
annotations, a watertight thickened variant for occupancy labeling, binary
front silhouettes, and an analytic shell occupancy field usable as an oracle
implicit surface.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import meshio
from .body import Pose, skin_points
from .implicit import OccupancyField
from .lines import FeatureLineAnnotation, LandmarkKind
from .mesh import Mesh, PointCloud, compute_vertex_normals, sample_surface
from .nets import RASTER_SIZE, SilhouetteDescriptor, descriptor_from_raster, \
    project_to_window
from .template import CATEGORY_LINES, ClothCategory, Region, activate, \
    active_feature_lines, build_template, extract_active_mesh

def _shell_workers() -> int:
    cap = os.environ.get("GARMENT_PIPELINE_THREADS")
    return max(1, int(cap)) if cap else -1


DEFAULT_BASE_OFFSET = 0.03     # garment-to-body distance
DEFAULT_THICKNESS = 0.01       # half-thickness of the closed variant
ANNOTATION_JITTER = 0.002
PERTURB_SIGMA = 0.02           # surface-point noise for occupancy labels
WRINKLE_OCTAVES = 3

# hem stretch factor applied to the waist region so skirt/dress lengths are
# geometrically distinguishable (the tube template shares one waist band)
CATEGORY_HEM_STRETCH: dict[ClothCategory, float] = {
    ClothCategory.LONG_SKIRT: 4.0,
    ClothCategory.SHORT_SKIRT: 1.5,
    ClothCategory.LONG_SLEEVE_DRESS: 2.5,
    ClothCategory.SHORT_SLEEVE_DRESS: 2.5,
    ClothCategory.NONE_SLEEVE_DRESS: 2.5,
}


@dataclass(frozen=True)
class SynthGarment:
    category: ClothCategory
    ground_truth_mesh: Mesh        # open-boundary garment surface
    closed_mesh: Mesh              # thickened watertight variant
    pose: Pose
    annotations: tuple[FeatureLineAnnotation, ...]
    wrinkle_seed: int

    def __post_init__(self):
        kinds = {a.kind for a in self.annotations}
        if kinds != set(CATEGORY_LINES[self.category]):
            raise ValueError(
                f"annotations {sorted(k.value for k in kinds)} do not cover "
                f"the category's landmark kinds")
        if not self.closed_mesh.is_watertight():
            raise ValueError("closed_mesh must be watertight")
        object.__setattr__(self, "annotations", tuple(self.annotations))


def _wrinkle_field(points: np.ndarray, amplitude: float,
                   rng: np.random.Generator) -> np.ndarray:
    """3-octave trigonometric displacement magnitude, amplitude halving per
    octave; smooth, band-limited and deterministic per generator state."""
    out = np.zeros(len(points))
    for octave in range(WRINKLE_OCTAVES):
        amp = amplitude / 2.0**octave
        freq = 8.0 * 2.0**octave
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        phase = rng.uniform(0, 2 * np.pi)
        out += amp * np.sin(freq * points @ direction + phase)
    return out


def generate(category: ClothCategory, pose_magnitude: float = 0.0,
             wrinkle_amplitude: float = 0.0, seed: int = 0) -> SynthGarment:
    """Deterministic synthetic garment for one category and seed."""
    if pose_magnitude < 0 or wrinkle_amplitude < 0:
        raise ValueError("amplitudes must be non-negative")
    rng = np.random.Generator(np.random.Philox(key=seed))
    template = activate(build_template(), category)
    body = template.body
    skeleton = body.skeleton

    theta = rng.uniform(-pose_magnitude, pose_magnitude,
                        size=(len(skeleton), 3))
    mask = np.ones(len(skeleton), dtype=bool)
    from .body import DEFAULT_INACTIVE
    for name in DEFAULT_INACTIVE:
        mask[skeleton.index(name)] = False
    theta[~mask] = 0.0
    pose = Pose(theta, mask)

    posed_all = skin_points(body, pose, body.rest_mesh.vertices,
                            body.skin_weights)
    active_mesh, index_map = extract_active_mesh(template)
    verts = posed_all[template.activation].copy()

    # category hem stretch: lengthen the waist region downward from its top
    stretch = CATEGORY_HEM_STRETCH.get(category, 1.0)
    if stretch != 1.0:
        waist = (template.region_labels[template.activation]
                 == int(Region.WAIST))
        if waist.any():
            y_top = verts[waist, 1].max()
            verts[waist, 1] = y_top + stretch * (verts[waist, 1] - y_top)

    shaped = Mesh(verts, active_mesh.faces)
    normals = compute_vertex_normals(shaped)
    offset = DEFAULT_BASE_OFFSET + _wrinkle_field(verts, wrinkle_amplitude,
                                                  rng)
    deformed = verts + offset[:, None] * normals
    garment = Mesh(deformed, active_mesh.faces)

    lines = active_feature_lines(template, index_map)
    annotations = []
    for fl in lines:
        pts = deformed[fl.vertex_indices]
        jitter = rng.uniform(-1, 1, size=pts.shape)
        jitter *= ANNOTATION_JITTER / np.maximum(
            np.linalg.norm(jitter, axis=1, keepdims=True), 1.0)
        annotations.append(FeatureLineAnnotation(fl.kind,
                                                 PointCloud(pts + jitter)))

    closed = thicken_mesh(garment, DEFAULT_THICKNESS)
    return SynthGarment(category, garment, closed, pose,
                        tuple(annotations), seed)


def thicken_mesh(mesh: Mesh, half_thickness: float) -> Mesh:
    """Watertight solid: outer/inner offset copies stitched along every
    boundary loop (the inner copy has reversed orientation)."""
    n = mesh.n_vertices
    normals = compute_vertex_normals(mesh)
    outer = mesh.vertices + half_thickness * normals
    inner = mesh.vertices - half_thickness * normals
    faces = [mesh.faces, mesh.faces[:, ::-1] + n]
    # directed boundary edges occur in exactly one face
    from .mesh import _directed_edges
    de = _directed_edges(mesh.faces)
    key = np.sort(de, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True,
                               return_counts=True)
    boundary = de[counts[inv] == 1]
    if len(boundary):
        a, b = boundary[:, 0], boundary[:, 1]
        wall = np.concatenate([
            np.stack([b, a, a + n], axis=1),
            np.stack([b, a + n, b + n], axis=1),
        ])
        faces.append(wall)
    return Mesh(np.concatenate([outer, inner]), np.concatenate(faces))


def _ray_parity(points: np.ndarray, mesh: Mesh, chunk: int = 512) -> np.ndarray:
    """Point-in-solid by parity of ray/triangle crossings (tilted ray)."""
    direction = np.array([0.57735027, 0.25708984, 0.77490234])
    direction /= np.linalg.norm(direction)
    a, b, c = mesh.face_corners()
    e1 = b - a
    e2 = c - a
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-12
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    labels = np.zeros(len(points), dtype=np.int64)
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        tvec = p[:, None, :] - a[None, :, :]
        u = np.einsum("pfj,fj->pf", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None, :, :])
        v = (qvec @ direction) * inv_det
        t = np.einsum("pfj,fj->pf", qvec, e2) * inv_det
        hit = (ok[None, :] & (u > 1e-12) & (v > 1e-12)
               & (u + v < 1 - 1e-12) & (t > 1e-12))
        labels[s:s + chunk] = hit.sum(axis=1) % 2
    return labels


def occupancy_labels(garment: SynthGarment, n: int, seed: int = 0):
    """(points, labels): half uniform in the padded bounds, half Gaussian-
    perturbed surface points; labels by ray-parity against closed_mesh."""
    mesh = garment.closed_mesh
    if not mesh.is_watertight():
        raise ValueError("closed_mesh must be watertight")
    rng = np.random.Generator(np.random.Philox(key=seed))
    lo, hi = mesh.bounds()
    pad = 0.05 * (hi - lo)
    n_uniform = n // 2
    uniform = rng.uniform(lo - pad, hi + pad, size=(n_uniform, 3))
    surf = sample_surface(mesh, n - n_uniform, seed=seed + 1).points
    near = surf + rng.normal(scale=PERTURB_SIGMA, size=surf.shape)
    points = np.concatenate([uniform, near])
    return points, _ray_parity(points, mesh).astype(np.float64)


def render_silhouette(garment, size: int = RASTER_SIZE) -> SilhouetteDescriptor:
    """Orthographic front (+z) projection rasterized by pixel-center coverage."""
    mesh = garment.ground_truth_mesh if isinstance(garment, SynthGarment) \
        else garment
    raster = np.zeros((size, size), dtype=np.uint8)
    if mesh.n_faces == 0:
        return descriptor_from_raster(raster)
    uv = project_to_window(mesh.vertices) * size  # pixel units
    tri = uv[mesh.faces]                          # (m, 3, 2): (u, v)
    lo = np.clip(np.floor(tri.min(axis=1)).astype(int), 0, size - 1)
    hi = np.clip(np.ceil(tri.max(axis=1)).astype(int), 0, size)
    for f in range(len(tri)):
        (u0, v0), (u1, v1), (u2, v2) = tri[f]
        us = np.arange(lo[f, 0], hi[f, 0]) + 0.5
        vs = np.arange(lo[f, 1], hi[f, 1]) + 0.5
        if len(us) == 0 or len(vs) == 0:
            continue
        gu, gv = np.meshgrid(us, vs, indexing="xy")
        d = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if abs(d) < 1e-12:
            continue
        w1 = ((gu - u0) * (v2 - v0) - (gv - v0) * (u2 - u0)) / d
        w2 = ((gv - v0) * (u1 - u0) - (gu - u0) * (v1 - v0)) / d
        inside = (w1 >= 0) & (w2 >= 0) & (w1 + w2 <= 1)
        rows = np.arange(lo[f, 1], hi[f, 1])
        raster[np.ix_(rows, np.arange(lo[f, 0], hi[f, 0]))] |= \
            inside.astype(np.uint8)
    return descriptor_from_raster(raster)


def shell_occupancy_field(surface: Mesh | PointCloud,
                          delta: float = 0.0, width: float = 0.008,
                          n_samples: int = 60000,
                          seed: int = 0) -> OccupancyField:
    """Analytic occupancy whose 0.5 level set is the (oriented) surface
    offset outward by `delta`, with a linear ramp of `width` across it.

    The signed distance is the tangent-plane distance at the nearest surface
    sample, so high occupancy fills the region behind the surface. Serves as
    an oracle implicit surface when the learned occupancy net is bypassed."""
    if isinstance(surface, Mesh):
        cloud = sample_surface(surface, n_samples, seed=seed)
    elif isinstance(surface, PointCloud) and surface.normals is not None:
        cloud = surface
    else:
        raise ValueError("surface must be a Mesh or an oriented PointCloud")
    pts = cloud.points
    nrm = cloud.normals
    tree = cKDTree(pts)
    # sampling-density slack: a point can be fractional-occupancy (near the
    # tangent plane) while still this much farther from the nearest sample
    nn_d, _ = tree.query(pts, k=2, workers=_shell_workers())
    spacing_margin = 4.0 * float(np.median(nn_d[:, 1]))

    def _occ(query):
        d, nn = tree.query(query, workers=_shell_workers())
        signed = np.einsum("ij,ij->i", query - pts[nn], nrm[nn])
        return np.clip(0.5 + (delta - signed) / width, 0.0, 1.0)

    def evaluate(query):
        return _occ(np.asarray(query, dtype=np.float64).reshape(-1, 3))

    def evaluate_grid(xs, ys, zs, stride: int = 4):
        """Fast lattice evaluation: the unsigned distance field is
        1-Lipschitz, so a coarse sub-lattice distance bounds all nearby fine
        distances from below; points provably outside the ramp band take the
        nearest coarse point's sign. Exact everywhere for closed surfaces;
        for open boundaries the saturated far field may quantize the
        tangent-plane extension sheets differently than `evaluate`."""
        axes = [np.asarray(a, dtype=np.float64) for a in (xs, ys, zs)]
        coarse_idx = [np.unique(np.r_[np.arange(0, len(a), stride),
                                      len(a) - 1]) for a in axes]
        cpts = np.stack(np.meshgrid(*[a[i] for a, i in zip(axes, coarse_idx)],
                                    indexing="ij"), axis=-1).reshape(-1, 3)
        d_coarse, nn_coarse = tree.query(cpts, workers=_shell_workers())
        shape_c = [len(i) for i in coarse_idx]
        s_coarse = np.einsum("ij,ij->i", cpts - pts[nn_coarse],
                             nrm[nn_coarse]).reshape(shape_c)
        d_coarse = d_coarse.reshape(shape_c)
        # nearest coarse plane and offset per fine coordinate, per axis
        near, off = [], []
        for a, ci in zip(axes, coarse_idx):
            j = np.searchsorted(a[ci], a)
            j = np.clip(j, 0, len(ci) - 1)
            jm = np.clip(j - 1, 0, len(ci) - 1)
            pick = np.where(np.abs(a - a[ci][jm]) <= np.abs(a - a[ci][j]),
                            jm, j)
            near.append(pick)
            off.append(np.abs(a - a[ci][pick]))
        lower = (d_coarse[np.ix_(*near)]
                 - np.sqrt(off[0][:, None, None]**2 + off[1][None, :, None]**2
                           + off[2][None, None, :]**2))
        band = abs(delta) + 0.5 * width + spacing_margin
        inside = np.broadcast_to((s_coarse[np.ix_(*near)] < 0), lower.shape)
        values = np.where(inside, 1.0, 0.0)
        needs = lower <= band
        if needs.any():
            fine = np.stack(np.meshgrid(*axes, indexing="ij"),
                            axis=-1)[needs]
            values[needs] = _occ(fine)
        return values

    return OccupancyField(evaluate, "analytic-shell", evaluate_grid)


# ---------------------------------------------------------------------------
# dataset directory layout

def write_pgm(path: str, raster: np.ndarray):
    r = np.asarray(raster)
    lines = [f"P2", f"{r.shape[1]} {r.shape[0]}", "1"]
    lines += [" ".join(str(int(x)) for x in row) for row in r]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path: str) -> np.ndarray:
    with open(path) as fh:
        tokens = fh.read().split()
    if tokens[0] != "P2":
        raise ValueError("only ascii PGM (P2) is supported")
    w, h, _maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)


def save_garment(directory: str, garment: SynthGarment,
                 meta: dict | None = None):
    """{dir}/garment.obj, closed.obj, annotations.json, pose.json,
    silhouette.pgm, meta.json"""
    os.makedirs(directory, exist_ok=True)
    meshio.write_obj(os.path.join(directory, "garment.obj"),
                     garment.ground_truth_mesh)
    meshio.write_obj(os.path.join(directory, "closed.obj"),
                     garment.closed_mesh)
    with open(os.path.join(directory, "annotations.json"), "w") as fh:
        json.dump([{"kind": a.kind.value, "points": a.points.points.tolist()}
                   for a in garment.annotations], fh, sort_keys=True)
    with open(os.path.join(directory, "pose.json"), "w") as fh:
        json.dump(garment.pose.to_json_dict(), fh, sort_keys=True)
    write_pgm(os.path.join(directory, "silhouette.pgm"),
              render_silhouette(garment).raster)
    record = {"category": garment.category.value,
              "wrinkle_seed": garment.wrinkle_seed}
    record.update(meta or {})
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(record, fh, sort_keys=True)


def load_garment(directory: str) -> SynthGarment:
    mesh = meshio.read_obj(os.path.join(directory, "garment.obj"))
    closed = meshio.read_obj(os.path.join(directory, "closed.obj"))
    with open(os.path.join(directory, "annotations.json")) as fh:
        anns = tuple(FeatureLineAnnotation(LandmarkKind(a["kind"]),
                                           PointCloud(np.asarray(a["points"])))
                     for a in json.load(fh))
    with open(os.path.join(directory, "pose.json")) as fh:
        pose = Pose.from_json_dict(json.load(fh))
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    return SynthGarment(ClothCategory(meta["category"]), mesh, closed, pose,
                        anns, int(meta["wrinkle_seed"]))
