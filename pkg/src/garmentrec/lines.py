"""Feature-line polylines, annotations, and the line fitting losses.

A feature line on the template is a closed loop of vertex indices around a
garment landmark (neckline, waist, cuffs, ...). Ground-truth annotations are
loose point sets near the same landmark on the target cloud.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointCloud

DEFAULT_LAMBDA_EDGE = 0.2


class LandmarkKind(str, Enum):
    NECK = "ne"
    WAIST = "wa"
    SHOULDER = "sh"
    ELBOW = "el"
    WRIST = "wr"
    KNEE = "kn"
    ANKLE = "an"
    HEMLINE = "he"


@dataclass(frozen=True)
class FeatureLine:
    """Ordered loop of mesh vertex indices marking one landmark."""

    kind: LandmarkKind
    vertex_indices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        idx = np.asarray(self.vertex_indices, dtype=np.int64).reshape(-1)
        if self.closed and len(idx) < 3:
            raise ValueError("closed feature line needs >= 3 vertices")
        idx.setflags(write=False)
        object.__setattr__(self, "vertex_indices", idx)

    def positions(self, vertices: np.ndarray) -> np.ndarray:
        return vertices[self.vertex_indices]


@dataclass(frozen=True)
class FeatureLineAnnotation:
    """Ground-truth point subset around one landmark region."""

    kind: LandmarkKind
    points: PointCloud

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("annotation must be non-empty")

    def centroid(self) -> np.ndarray:
        return self.points.points.mean(axis=0)


def line_loss(predicted_positions: np.ndarray, annotation) -> float:
    """Symmetric mean-squared-nearest-distance between prediction and annotation."""
    pred = np.asarray(predicted_positions, dtype=np.float64).reshape(-1, 3)
    ann = annotation.points.points if isinstance(annotation, FeatureLineAnnotation) \
        else np.asarray(annotation, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(ann) == 0:
        raise ValueError("line_loss inputs must be non-empty")
    d_pa, _ = cKDTree(ann).query(pred)
    d_ap, _ = cKDTree(pred).query(ann)
    return float(np.mean(d_pa**2) + np.mean(d_ap**2))


def edge_reg(loop_positions: np.ndarray) -> float:
    """Mean squared edge length of a closed loop, closing edge included."""
    p = np.asarray(loop_positions, dtype=np.float64).reshape(-1, 3)
    if len(p) < 3:
        raise ValueError("edge_reg needs >= 3 loop vertices")
    diffs = np.roll(p, -1, axis=0) - p
    return float(np.mean(np.sum(diffs**2, axis=1)))


def _match_by_kind(line_items, annotations):
    """Pair (kind, positions) entries with annotations of the same kind.

    Duplicate kinds (e.g. left/right shoulders) are paired greedily by
    centroid proximity; a count mismatch for any kind is an error.
    """
    by_kind: dict[LandmarkKind, list] = {}
    for kind, pos in line_items:
        by_kind.setdefault(kind, []).append(np.asarray(pos, dtype=np.float64))
    ann_by_kind: dict[LandmarkKind, list[FeatureLineAnnotation]] = {}
    for ann in annotations:
        ann_by_kind.setdefault(ann.kind, []).append(ann)
    if set(by_kind) != set(ann_by_kind):
        raise ValueError(
            f"unmatched landmark kinds: lines {sorted(k.value for k in by_kind)} "
            f"vs annotations {sorted(k.value for k in ann_by_kind)}")
    pairs = []
    for kind in sorted(by_kind, key=lambda k: k.value):
        lines = by_kind[kind]
        anns = list(ann_by_kind[kind])
        if len(lines) != len(anns):
            raise ValueError(f"count mismatch for landmark '{kind.value}'")
        for pos in lines:
            c = pos.mean(axis=0)
            j = int(np.argmin([np.linalg.norm(a.centroid() - c) for a in anns]))
            pairs.append((pos, anns.pop(j)))
    return pairs


def fitting_loss(lines, annotations, lambda_edge: float = DEFAULT_LAMBDA_EDGE) -> float:
    """Sum over matched lines of line_loss + lambda_edge * edge_reg."""
    total = 0.0
    for pos, ann in _match_by_kind(lines, annotations):
        total += line_loss(pos, ann) + lambda_edge * edge_reg(pos)
    return total


def laplacian_smooth_line(loop_positions: np.ndarray, iterations: int,
                          step: float = 0.5) -> np.ndarray:
    """Uniform-weight loop smoothing; preserves the loop centroid."""
    p = np.asarray(loop_positions, dtype=np.float64).reshape(-1, 3).copy()
    if len(p) < 3:
        raise ValueError("need a closed loop with >= 3 vertices")
    for _ in range(iterations):
        target = 0.5 * (np.roll(p, 1, axis=0) + np.roll(p, -1, axis=0))
        p += step * (target - p)
    return p
