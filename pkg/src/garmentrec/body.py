"""Procedural parametric body: skeleton, linear blend skinning, pose fitting.

The body is a stand-in articulated model (capsule limbs, ellipsoid torso)
with a 14-joint skeleton. Pose parameters are per-joint axis-angle rotations;
the pelvis entry doubles as global rotation and is masked inactive by default,
as are wrists and ankles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lines import FeatureLineAnnotation, LandmarkKind
from .mesh import Mesh

JOINT_NAMES = (
    "pelvis", "spine",
    "shoulder_L", "shoulder_R", "elbow_L", "elbow_R", "wrist_L", "wrist_R",
    "hip_L", "hip_R", "knee_L", "knee_R", "ankle_L", "ankle_R",
)
# pelvis = global rotation; wrists/ankles do not drive garment deformation
DEFAULT_INACTIVE = ("pelvis", "wrist_L", "wrist_R", "ankle_L", "ankle_R")

DEFAULT_LAMBDA_REG = 1e-5


@dataclass(frozen=True)
class Skeleton:
    joints: np.ndarray          # (J, 3) rest positions
    parents: np.ndarray         # (J,) parent index, root points at itself
    names: tuple[str, ...]

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        p = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        if len(j) != len(p) or len(j) != len(self.names):
            raise ValueError("joints, parents and names must have equal length")
        roots = np.flatnonzero(p == np.arange(len(p)))
        if len(roots) != 1:
            raise ValueError("skeleton must have exactly one root")
        # every joint must reach the root (single tree)
        for i in range(len(p)):
            seen, k = set(), i
            while p[k] != k:
                if k in seen:
                    raise ValueError("parent cycle detected")
                seen.add(k)
                k = p[k]
        j.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "parents", p)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def topological_order(self) -> list[int]:
        order, placed = [], set()
        pending = list(range(len(self)))
        while pending:
            for i in list(pending):
                p = self.parents[i]
                if p == i or p in placed:
                    order.append(i)
                    placed.add(i)
                    pending.remove(i)
        return order


@dataclass(frozen=True)
class Pose:
    theta: np.ndarray           # (J, 3) axis-angle per joint
    active_mask: np.ndarray     # (J,) bool

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64).reshape(-1, 3)
        m = np.asarray(self.active_mask, dtype=bool).reshape(-1)
        if len(t) != len(m):
            raise ValueError("theta and active_mask length mismatch")
        if len(t) and np.abs(t[~m]).max(initial=0.0) != 0.0:
            raise ValueError("inactive pose entries must be exactly zero")
        t.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "active_mask", m)

    def __len__(self) -> int:
        return len(self.theta)

    def to_json_dict(self) -> dict:
        return {"theta": self.theta.tolist(),
                "active_mask": self.active_mask.tolist()}

    @staticmethod
    def from_json_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["theta"]), np.asarray(d["active_mask"]))


def default_active_mask(skeleton: Skeleton) -> np.ndarray:
    mask = np.ones(len(skeleton), dtype=bool)
    for name in DEFAULT_INACTIVE:
        mask[skeleton.index(name)] = False
    return mask


def zero_pose(skeleton: Skeleton) -> Pose:
    return Pose(np.zeros((len(skeleton), 3)), default_active_mask(skeleton))


@dataclass(frozen=True)
class Landmark:
    """A skeleton-attached reference point for one annotated feature line."""

    kind: LandmarkKind
    joint: int                  # frame the landmark rides on
    rest_position: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.rest_position, dtype=np.float64).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "rest_position", p)


@dataclass(frozen=True)
class BodyModel:
    rest_mesh: Mesh
    skeleton: Skeleton
    skin_weights: np.ndarray    # (n, J), rows sum to 1
    landmarks: tuple[Landmark, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.skin_weights, dtype=np.float64)
        if w.shape != (self.rest_mesh.n_vertices, len(self.skeleton)):
            raise ValueError("skin_weights must be (n_vertices, n_joints)")
        if (w < 0).any():
            raise ValueError("skin weights must be non-negative")
        if np.abs(w.sum(axis=1) - 1.0).max(initial=0.0) > 1e-9:
            raise ValueError("skin weight rows must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "skin_weights", w)
        object.__setattr__(self, "landmarks", tuple(self.landmarks))


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for a batch (J, 3) -> (J, 3, 3)."""
    aa = np.asarray(aa, dtype=np.float64)
    single = aa.ndim == 1
    aa = aa.reshape(-1, 3)
    angle = np.linalg.norm(aa, axis=1)
    out = np.tile(np.eye(3), (len(aa), 1, 1))
    nz = angle > 0
    if nz.any():
        axis = aa[nz] / angle[nz, None]
        x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
        zero = np.zeros_like(x)
        K = np.stack([
            np.stack([zero, -z, y], axis=1),
            np.stack([z, zero, -x], axis=1),
            np.stack([-y, x, zero], axis=1),
        ], axis=1)
        s = np.sin(angle[nz])[:, None, None]
        c = np.cos(angle[nz])[:, None, None]
        out[nz] = np.eye(3) + s * K + (1 - c) * (K @ K)
    return out[0] if single else out


def forward_kinematics(skeleton: Skeleton, pose: Pose):
    """World rotation (J,3,3) and position (J,3) of every joint."""
    if len(pose) != len(skeleton):
        raise ValueError("pose length must match skeleton")
    local = axis_angle_to_matrix(pose.theta)
    R = np.zeros((len(skeleton), 3, 3))
    t = np.zeros((len(skeleton), 3))
    rest = skeleton.joints
    for i in skeleton.topological_order():
        p = skeleton.parents[i]
        if p == i:
            R[i] = local[i]
            t[i] = rest[i]
        else:
            R[i] = R[p] @ local[i]
            t[i] = t[p] + R[p] @ (rest[i] - rest[p])
    return R, t


def pose_mesh(model: BodyModel, pose: Pose) -> Mesh:
    """Linear-blend-skinned mesh; the zero pose returns the rest mesh bit-exactly."""
    if len(pose) != len(model.skeleton):
        raise ValueError("pose length must match skeleton")
    if not pose.theta.any():
        return model.rest_mesh
    v = skin_points(model, pose, model.rest_mesh.vertices, model.skin_weights)
    return Mesh(v, model.rest_mesh.faces)


def skin_points(model: BodyModel, pose: Pose, points: np.ndarray,
                weights: np.ndarray) -> np.ndarray:
    R, t = forward_kinematics(model.skeleton, pose)
    rest = model.skeleton.joints
    out = np.zeros_like(points, dtype=np.float64)
    for j in range(len(model.skeleton)):
        wj = weights[:, j]
        idx = np.flatnonzero(wj)
        if idx.size == 0:
            continue
        moved = (points[idx] - rest[j]) @ R[j].T + t[j]
        out[idx] += wj[idx, None] * moved
    return out


def landmark_positions(model: BodyModel, pose: Pose) -> np.ndarray:
    """(L, 3) posed positions of the model's skeleton-attached landmarks."""
    R, t = forward_kinematics(model.skeleton, pose)
    rest = model.skeleton.joints
    return np.array([
        R[lm.joint] @ (lm.rest_position - rest[lm.joint]) + t[lm.joint]
        for lm in model.landmarks
    ])


def pose_loss(predicted: Pose, target: Pose,
              lambda_reg: float = DEFAULT_LAMBDA_REG) -> float:
    """MSE over active entries plus lambda_reg * sum of squared predictions."""
    if len(predicted) != len(target):
        raise ValueError("pose length mismatch")
    if not np.array_equal(predicted.active_mask, target.active_mask):
        raise ValueError("active masks must match")
    m = predicted.active_mask
    diff = predicted.theta[m] - target.theta[m]
    mse = float(np.mean(diff**2)) if diff.size else 0.0
    return mse + lambda_reg * float(np.sum(predicted.theta**2))


_TORSO_KINDS = (LandmarkKind.NECK, LandmarkKind.WAIST, LandmarkKind.SHOULDER)


def _kabsch(src: np.ndarray, dst: np.ndarray):
    """Rigid transform (R, t) minimizing ||R src + t - dst||."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cd - R @ cs


def _pair_landmarks(model: BodyModel, annotations):
    """Match each annotation to a distinct model landmark of the same kind."""
    pairs = []
    used = set()
    for ann in annotations:
        cands = [(i, lm) for i, lm in enumerate(model.landmarks)
                 if lm.kind == ann.kind and i not in used]
        if not cands:
            continue
        c = ann.centroid()
        i, lm = min(cands, key=lambda t: np.linalg.norm(t[1].rest_position - c))
        used.add(i)
        pairs.append((lm, c))
    return pairs


def fit_pose_to_annotations(model: BodyModel, annotations,
                            max_iterations: int = 100,
                            tol: float = 1e-6) -> Pose:
    """Recover articulation from annotated feature lines.

    Joint targets are annotation centroids. Torso landmarks rigidly align the
    annotations into the model frame first; the active pose entries are then
    found by damped Gauss-Newton on landmark-position residuals.
    """
    annotations = list(annotations)
    if not any(a.kind in _TORSO_KINDS for a in annotations):
        raise ValueError("annotations must include at least one torso line "
                         "(neck, waist or shoulder)")
    pairs = _pair_landmarks(model, annotations)
    if not pairs:
        raise ValueError("no annotation matches any model landmark")

    torso = [(lm.rest_position, c) for lm, c in pairs if lm.kind in _TORSO_KINDS]
    src = np.array([s for s, _ in torso])
    dst = np.array([d for _, d in torso])
    if len(torso) >= 3:
        R_align, t_align = _kabsch(src, dst)
    else:
        R_align = np.eye(3)
        t_align = dst.mean(axis=0) - src.mean(axis=0)
    # pull targets into the model frame (articulation only is estimated)
    targets = np.array([R_align.T @ (c - t_align) for _, c in pairs])
    lms = [lm for lm, _ in pairs]

    skeleton = model.skeleton
    mask = default_active_mask(skeleton)
    active = np.flatnonzero(mask)
    n_par = 3 * len(active)

    def residuals(params: np.ndarray) -> np.ndarray:
        theta = np.zeros((len(skeleton), 3))
        theta[active] = params.reshape(-1, 3)
        pose = Pose(theta, mask)
        R, t = forward_kinematics(skeleton, pose)
        rest = skeleton.joints
        pos = np.array([R[lm.joint] @ (lm.rest_position - rest[lm.joint]) + t[lm.joint]
                        for lm in lms])
        return (pos - targets).ravel()

    params = np.zeros(n_par)
    r = residuals(params)
    rms = np.sqrt(np.mean(r**2))
    damping = 1e-3
    step = 1e-5
    for _ in range(max_iterations):
        J = np.empty((len(r), n_par))
        for k in range(n_par):
            dp = np.zeros(n_par)
            dp[k] = step
            J[:, k] = (residuals(params + dp) - residuals(params - dp)) / (2 * step)
        improved = False
        for _ in range(8):
            delta = np.linalg.solve(J.T @ J + damping * np.eye(n_par), -J.T @ r)
            r_new = residuals(params + delta)
            rms_new = np.sqrt(np.mean(r_new**2))
            if rms_new < rms:
                params = params + delta
                r, improvement, rms = r_new, rms - rms_new, rms_new
                damping = max(damping * 0.5, 1e-9)
                improved = True
                break
            damping *= 10.0
        if not improved or improvement < tol:
            break

    theta = np.zeros((len(skeleton), 3))
    theta[active] = params.reshape(-1, 3)
    return Pose(theta, mask)
