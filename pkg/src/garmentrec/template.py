"""Adaptable garment template: procedural body, semantic regions, activation.

One body-shaped mesh serves all ten clothing categories. Per-vertex region
labels are grouped into six semantic classes (torso, waist, upper/lower limbs,
upper/lower legs); activating a category switches whole regions on or off and
restricts the embedded feature lines to the category's landmark set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from functools import lru_cache

import numpy as np

from .body import BodyModel, JOINT_NAMES, Landmark, Skeleton
from .lines import FeatureLine, LandmarkKind
from .mesh import Mesh, subdivide_region_with_tracking
from . import meshio


class ClothCategory(str, Enum):
    LONG_SLEEVE_COAT = "long-sleeve coat"
    SHORT_SLEEVE_COAT = "short-sleeve coat"
    NONE_SLEEVE_COAT = "none-sleeve coat"
    LONG_SLEEVE_DRESS = "long-sleeve dress"
    SHORT_SLEEVE_DRESS = "short-sleeve dress"
    NONE_SLEEVE_DRESS = "none-sleeve dress"
    LONG_TROUSERS = "long trousers"
    SHORT_TROUSERS = "short trousers"
    LONG_SKIRT = "long skirt"
    SHORT_SKIRT = "short skirt"


class Region(IntEnum):
    TORSO = 0
    WAIST = 1
    UPPER_LIMB_L = 2
    UPPER_LIMB_R = 3
    LOWER_LIMB_L = 4
    LOWER_LIMB_R = 5
    UPPER_LEG_L = 6
    UPPER_LEG_R = 7
    LOWER_LEG_L = 8
    LOWER_LEG_R = 9


class SemanticRegion(str, Enum):
    TORSO = "torso"
    WAIST = "waist"
    UPPER_LIMBS = "upper_limbs"
    LOWER_LIMBS = "lower_limbs"
    UPPER_LEGS = "upper_legs"
    LOWER_LEGS = "lower_legs"


REGION_TO_SEMANTIC = {
    Region.TORSO: SemanticRegion.TORSO,
    Region.WAIST: SemanticRegion.WAIST,
    Region.UPPER_LIMB_L: SemanticRegion.UPPER_LIMBS,
    Region.UPPER_LIMB_R: SemanticRegion.UPPER_LIMBS,
    Region.LOWER_LIMB_L: SemanticRegion.LOWER_LIMBS,
    Region.LOWER_LIMB_R: SemanticRegion.LOWER_LIMBS,
    Region.UPPER_LEG_L: SemanticRegion.UPPER_LEGS,
    Region.UPPER_LEG_R: SemanticRegion.UPPER_LEGS,
    Region.LOWER_LEG_L: SemanticRegion.LOWER_LEGS,
    Region.LOWER_LEG_R: SemanticRegion.LOWER_LEGS,
}

K = LandmarkKind
# landmark rows of the per-category feature-line table
CATEGORY_LINES: dict[ClothCategory, frozenset[LandmarkKind]] = {
    ClothCategory.LONG_SLEEVE_COAT: frozenset({K.NECK, K.WAIST, K.SHOULDER, K.ELBOW, K.WRIST}),
    ClothCategory.SHORT_SLEEVE_COAT: frozenset({K.NECK, K.WAIST, K.SHOULDER, K.ELBOW}),
    ClothCategory.NONE_SLEEVE_COAT: frozenset({K.NECK, K.WAIST, K.SHOULDER}),
    ClothCategory.LONG_SLEEVE_DRESS: frozenset({K.NECK, K.WAIST, K.SHOULDER, K.ELBOW, K.WRIST, K.HEMLINE}),
    ClothCategory.SHORT_SLEEVE_DRESS: frozenset({K.NECK, K.WAIST, K.SHOULDER, K.ELBOW, K.HEMLINE}),
    ClothCategory.NONE_SLEEVE_DRESS: frozenset({K.NECK, K.WAIST, K.SHOULDER, K.HEMLINE}),
    ClothCategory.LONG_TROUSERS: frozenset({K.WAIST, K.KNEE, K.ANKLE}),
    ClothCategory.SHORT_TROUSERS: frozenset({K.WAIST, K.KNEE}),
    ClothCategory.LONG_SKIRT: frozenset({K.WAIST, K.HEMLINE}),
    ClothCategory.SHORT_SKIRT: frozenset({K.WAIST, K.HEMLINE}),
}

S = SemanticRegion
CATEGORY_REGIONS: dict[ClothCategory, frozenset[SemanticRegion]] = {
    ClothCategory.LONG_SLEEVE_COAT: frozenset({S.TORSO, S.WAIST, S.UPPER_LIMBS, S.LOWER_LIMBS}),
    ClothCategory.SHORT_SLEEVE_COAT: frozenset({S.TORSO, S.WAIST, S.UPPER_LIMBS}),
    ClothCategory.NONE_SLEEVE_COAT: frozenset({S.TORSO, S.WAIST}),
    ClothCategory.LONG_SLEEVE_DRESS: frozenset({S.TORSO, S.WAIST, S.UPPER_LIMBS, S.LOWER_LIMBS}),
    ClothCategory.SHORT_SLEEVE_DRESS: frozenset({S.TORSO, S.WAIST, S.UPPER_LIMBS}),
    ClothCategory.NONE_SLEEVE_DRESS: frozenset({S.TORSO, S.WAIST}),
    ClothCategory.LONG_TROUSERS: frozenset({S.WAIST, S.UPPER_LEGS, S.LOWER_LEGS}),
    ClothCategory.SHORT_TROUSERS: frozenset({S.WAIST, S.UPPER_LEGS}),
    ClothCategory.LONG_SKIRT: frozenset({S.WAIST}),
    ClothCategory.SHORT_SKIRT: frozenset({S.WAIST}),
}

# long garments densify the waist region to absorb large hem deformations
WAIST_SUBDIV_LEVELS: dict[ClothCategory, int] = {
    ClothCategory.LONG_SKIRT: 1,
    ClothCategory.LONG_SLEEVE_DRESS: 2,
}


@dataclass(frozen=True)
class AdaptableTemplate:
    body: BodyModel
    region_labels: np.ndarray           # (n,) Region codes
    activation: np.ndarray              # (n,) bool
    feature_lines: tuple[FeatureLine, ...]
    category: ClothCategory | None = None
    waist_subdivision: int = 0

    def __post_init__(self):
        labels = np.asarray(self.region_labels, dtype=np.int8).reshape(-1)
        act = np.asarray(self.activation, dtype=bool).reshape(-1)
        n = self.body.rest_mesh.n_vertices
        if len(labels) != n or len(act) != n:
            raise ValueError("labels/activation must cover every vertex")
        # activation must be constant within each semantic region
        for r in Region:
            sel = act[labels == r]
            if sel.size and not (sel.all() or not sel.any()):
                raise ValueError(f"mixed activation inside region {r.name}")
        labels.setflags(write=False)
        act.setflags(write=False)
        object.__setattr__(self, "region_labels", labels)
        object.__setattr__(self, "activation", act)
        object.__setattr__(self, "feature_lines", tuple(self.feature_lines))

    def active_semantic_regions(self) -> frozenset[SemanticRegion]:
        present = {REGION_TO_SEMANTIC[Region(r)]
                   for r in np.unique(self.region_labels[self.activation])}
        return frozenset(present)

    def active_line_kinds(self) -> frozenset[LandmarkKind]:
        return frozenset(fl.kind for fl in self.feature_lines)


# ---------------------------------------------------------------------------
# procedural construction

_M_TORSO = 18
_M_LIMB = 14


def _tube(ring_ys, centers_xz, rx, rz, m, v_offset):
    """Open y-axis tube. Rings ordered bottom-up; outward-facing triangles."""
    ring_ys = np.asarray(ring_ys, dtype=np.float64)
    R = len(ring_ys)
    rx = np.broadcast_to(np.asarray(rx, dtype=np.float64), (R,))
    rz = np.broadcast_to(np.asarray(rz, dtype=np.float64), (R,))
    cx, cz = centers_xz
    theta = 2 * np.pi * np.arange(m) / m
    verts = np.empty((R, m, 3))
    verts[:, :, 0] = cx + rx[:, None] * np.cos(theta)[None, :]
    verts[:, :, 1] = ring_ys[:, None]
    verts[:, :, 2] = cz + rz[:, None] * np.sin(theta)[None, :]
    faces = []
    for i in range(R - 1):
        for j in range(m):
            a = v_offset + i * m + j
            b = v_offset + i * m + (j + 1) % m
            c = v_offset + (i + 1) * m + (j + 1) % m
            d = v_offset + (i + 1) * m + j
            faces.append((a, d, c))
            faces.append((a, c, b))
    return verts.reshape(-1, 3), np.asarray(faces, dtype=np.int64)


def _ring_ids(v_offset, ring, m):
    return v_offset + ring * m + np.arange(m)


@lru_cache(maxsize=1)
def build_template() -> AdaptableTemplate:
    """Construct the canonical adaptable template (all regions active)."""
    parts_v, parts_f = [], []
    labels = []
    weights_spec = []   # (vertex slice joint assignment) rows
    offset = 0

    joints = {
        "pelvis": (0.0, -0.05, 0.0),
        "spine": (0.0, 0.08, 0.0),
        "shoulder_L": (0.16, 0.27, 0.0),
        "shoulder_R": (-0.16, 0.27, 0.0),
        "elbow_L": (0.16, 0.13, 0.0),
        "elbow_R": (-0.16, 0.13, 0.0),
        "wrist_L": (0.16, -0.01, 0.0),
        "wrist_R": (-0.16, -0.01, 0.0),
        "hip_L": (0.06, -0.12, 0.0),
        "hip_R": (-0.06, -0.12, 0.0),
        "knee_L": (0.06, -0.38, 0.0),
        "knee_R": (-0.06, -0.38, 0.0),
        "ankle_L": (0.06, -0.62, 0.0),
        "ankle_R": (-0.06, -0.62, 0.0),
    }
    parent_of = {
        "pelvis": "pelvis", "spine": "pelvis",
        "shoulder_L": "spine", "shoulder_R": "spine",
        "elbow_L": "shoulder_L", "elbow_R": "shoulder_R",
        "wrist_L": "elbow_L", "wrist_R": "elbow_R",
        "hip_L": "pelvis", "hip_R": "pelvis",
        "knee_L": "hip_L", "knee_R": "hip_R",
        "ankle_L": "knee_L", "ankle_R": "knee_R",
    }
    jidx = {n: i for i, n in enumerate(JOINT_NAMES)}
    skeleton = Skeleton(
        joints=np.array([joints[n] for n in JOINT_NAMES]),
        parents=np.array([jidx[parent_of[n]] for n in JOINT_NAMES]),
        names=JOINT_NAMES,
    )

    lines: list[tuple[LandmarkKind, np.ndarray, str]] = []  # kind, ids, joint

    # torso: 13 rings, waist level up to neck
    torso_ys = np.linspace(0.0, 0.30, 13)
    taper = np.linspace(0.0, 1.0, 13)
    torso_off = offset
    v, f = _tube(torso_ys, (0.0, 0.0), 0.11 - 0.045 * taper, 0.07 - 0.02 * taper,
                 _M_TORSO, offset)
    parts_v.append(v)
    parts_f.append(f)
    labels += [Region.TORSO] * len(v)
    weights_spec.append((offset, len(v), jidx["spine"]))
    offset += len(v)
    lines.append((K.NECK, _ring_ids(torso_off, 12, _M_TORSO), "spine"))
    for side, cols in (("L", (17, 0, 1)), ("R", (8, 9, 10))):
        loop = np.concatenate([
            torso_off + 10 * _M_TORSO + np.asarray(cols),
            torso_off + 11 * _M_TORSO + np.asarray(cols[::-1]),
        ])
        lines.append((K.SHOULDER, loop, "spine"))

    # waist band / skirt root: 5 rings
    waist_ys = np.linspace(-0.10, -0.01, 5)
    waist_off = offset
    v, f = _tube(waist_ys, (0.0, 0.0), np.linspace(0.13, 0.115, 5),
                 np.linspace(0.09, 0.075, 5), _M_TORSO, offset)
    parts_v.append(v)
    parts_f.append(f)
    labels += [Region.WAIST] * len(v)
    weights_spec.append((offset, len(v), jidx["pelvis"]))
    offset += len(v)
    lines.append((K.WAIST, _ring_ids(waist_off, 4, _M_TORSO), "pelvis"))
    lines.append((K.HEMLINE, _ring_ids(waist_off, 0, _M_TORSO), "pelvis"))

    # arms: 17 rings from wrist (bottom) to shoulder; elbow at ring 8
    arm_ys = np.concatenate([np.linspace(-0.01, 0.13, 9),
                             np.linspace(0.13, 0.27, 9)[1:]])
    for side, sx in (("L", 1.0), ("R", -1.0)):
        arm_off = offset
        v, f = _tube(arm_ys, (sx * 0.16, 0.0), 0.035, 0.035, _M_LIMB, offset)
        parts_v.append(v)
        parts_f.append(f)
        lower = Region.LOWER_LIMB_L if side == "L" else Region.LOWER_LIMB_R
        upper = Region.UPPER_LIMB_L if side == "L" else Region.UPPER_LIMB_R
        labels += [lower] * (8 * _M_LIMB) + [upper] * (9 * _M_LIMB)
        weights_spec.append((offset, 9 * _M_LIMB, jidx[f"elbow_{side}"]))
        weights_spec.append((offset + 9 * _M_LIMB, 8 * _M_LIMB, jidx[f"shoulder_{side}"]))
        offset += len(v)
        lines.append((K.WRIST, _ring_ids(arm_off, 0, _M_LIMB), f"elbow_{side}"))
        lines.append((K.ELBOW, _ring_ids(arm_off, 8, _M_LIMB), f"shoulder_{side}"))

    # legs: 17 rings from ankle (bottom) to hip; knee at ring 8
    leg_ys = np.concatenate([np.linspace(-0.62, -0.38, 9),
                             np.linspace(-0.38, -0.12, 9)[1:]])
    for side, sx in (("L", 1.0), ("R", -1.0)):
        leg_off = offset
        v, f = _tube(leg_ys, (sx * 0.06, 0.0), 0.045, 0.045, _M_LIMB, offset)
        parts_v.append(v)
        parts_f.append(f)
        lower = Region.LOWER_LEG_L if side == "L" else Region.LOWER_LEG_R
        upper = Region.UPPER_LEG_L if side == "L" else Region.UPPER_LEG_R
        labels += [lower] * (8 * _M_LIMB) + [upper] * (9 * _M_LIMB)
        weights_spec.append((offset, 9 * _M_LIMB, jidx[f"knee_{side}"]))
        weights_spec.append((offset + 9 * _M_LIMB, 8 * _M_LIMB, jidx[f"hip_{side}"]))
        offset += len(v)
        lines.append((K.ANKLE, _ring_ids(leg_off, 0, _M_LIMB), f"knee_{side}"))
        lines.append((K.KNEE, _ring_ids(leg_off, 8, _M_LIMB), f"hip_{side}"))

    verts = np.concatenate(parts_v)
    faces = np.concatenate(parts_f)
    mesh = Mesh(verts, faces)

    weights = np.zeros((len(verts), len(JOINT_NAMES)))
    for start, count, j in weights_spec:
        weights[start:start + count, j] = 1.0

    feature_lines = tuple(FeatureLine(kind, ids) for kind, ids, _ in lines)
    landmarks = tuple(
        Landmark(kind, jidx[joint], verts[ids].mean(axis=0))
        for kind, ids, joint in lines
    )
    body = BodyModel(mesh, skeleton, weights, landmarks)
    return AdaptableTemplate(
        body=body,
        region_labels=np.array([int(r) for r in labels], dtype=np.int8),
        activation=np.ones(len(verts), dtype=bool),
        feature_lines=feature_lines,
    )


# ---------------------------------------------------------------------------
# activation

def activate(template: AdaptableTemplate, category: ClothCategory,
             waist_levels: int | None = None) -> AdaptableTemplate:
    """Switch on the category's semantic regions and landmark lines.

    Long garments additionally densify the waist region (level count per
    WAIST_SUBDIV_LEVELS unless overridden). Idempotent for a fixed category.
    """
    target_levels = WAIST_SUBDIV_LEVELS.get(category, 0) \
        if waist_levels is None else waist_levels
    body = template.body
    labels = template.region_labels
    lines = template.feature_lines

    missing = target_levels - template.waist_subdivision
    if missing > 0:
        body, labels, lines = _subdivide_waist(body, labels, lines, missing)

    semantic = CATEGORY_REGIONS[category]
    label_active = np.array(
        [REGION_TO_SEMANTIC[Region(r)] in semantic for r in range(len(Region))])
    activation = label_active[labels]

    kinds = CATEGORY_LINES[category]
    active_lines = tuple(
        fl for fl in lines
        if fl.kind in kinds and activation[fl.vertex_indices].all())

    return AdaptableTemplate(
        body=body,
        region_labels=labels,
        activation=activation,
        feature_lines=active_lines,
        category=category,
        waist_subdivision=max(template.waist_subdivision, target_levels),
    )


def _subdivide_waist(body: BodyModel, labels: np.ndarray, lines, levels: int):
    waist_faces = np.flatnonzero(
        (labels[body.rest_mesh.faces] == int(Region.WAIST)).all(axis=1))
    mesh, parents = subdivide_region_with_tracking(body.rest_mesh, waist_faces,
                                                   levels)
    n_old = body.rest_mesh.n_vertices
    new_labels = np.empty(mesh.n_vertices, dtype=np.int8)
    new_labels[:n_old] = labels
    new_weights = np.zeros((mesh.n_vertices, body.skin_weights.shape[1]))
    new_weights[:n_old] = body.skin_weights
    for i in range(n_old, mesh.n_vertices):
        a, b = parents[i]
        new_labels[i] = new_labels[a] if new_labels[a] == new_labels[b] \
            else int(Region.WAIST)
        w = 0.5 * (new_weights[a] + new_weights[b])
        new_weights[i] = w / w.sum()
    new_body = BodyModel(mesh, body.skeleton, new_weights, body.landmarks)
    return new_body, new_labels, lines  # original line indices are preserved


def extract_active_mesh(template: AdaptableTemplate) -> tuple[Mesh, np.ndarray]:
    """Drop faces touching inactive vertices; compact the active vertices.

    Returns (mesh, index_map) where index_map maps old vertex index to new
    (-1 for removed vertices).
    """
    act = template.activation
    if not act.any():
        raise ValueError("cannot extract a mesh with all regions inactive")
    mesh = template.body.rest_mesh
    index_map = np.full(mesh.n_vertices, -1, dtype=np.int64)
    index_map[act] = np.arange(int(act.sum()))
    keep = act[mesh.faces].all(axis=1)
    return Mesh(mesh.vertices[act], index_map[mesh.faces[keep]]), index_map


def active_feature_lines(template: AdaptableTemplate,
                         index_map: np.ndarray) -> tuple[FeatureLine, ...]:
    """Feature lines re-indexed into the extracted active mesh."""
    return tuple(
        FeatureLine(fl.kind, index_map[fl.vertex_indices], fl.closed)
        for fl in template.feature_lines
    )


def save_template(path_prefix: str, template: AdaptableTemplate):
    """Persist as OBJ geometry plus a JSON sidecar."""
    meshio.write_obj(path_prefix + ".obj", template.body.rest_mesh)
    sidecar = {
        "region_labels": template.region_labels.tolist(),
        "activation": template.activation.tolist(),
        "feature_lines": [
            {"kind": fl.kind.value, "vertex_indices": fl.vertex_indices.tolist(),
             "closed": fl.closed}
            for fl in template.feature_lines
        ],
        "category": template.category.value if template.category else None,
        "waist_subdivision": template.waist_subdivision,
        "category_table": {
            c.value: sorted(k.value for k in CATEGORY_LINES[c])
            for c in ClothCategory
        },
    }
    with open(path_prefix + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
