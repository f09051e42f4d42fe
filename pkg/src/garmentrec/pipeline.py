"""End-to-end reconstruction pipeline and the benchmark/ablation runners.

Stage chain: classify -> activate template (M_t) -> pose (M_p) -> feature-line
regression + handle deformation (M_l) -> implicit surface extraction (M_I) ->
gated non-rigid registration (M_r). Every learned stage has an oracle
substitute (category / pose / lines / occupancy) so the geometry stages can be
exercised and benchmarked independently of learned-stage quality.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import meshio
from .body import Pose, fit_pose_to_annotations, skin_points, zero_pose
from .implicit import OccupancyField, extract_surface
from .laplacian import build_system, solve
from .lines import FeatureLine, FeatureLineAnnotation
from .mesh import Mesh, sample_surface
from .metrics import BenchmarkReport, evaluate_model
from .nets import GCNWeights, MLPWeights, SilhouetteDescriptor, \
    build_line_graph, init_gcn_weights, init_mlp_weights, load_weights_into, \
    occupancy_probability, predict_line_displacements
from .register import RegisterParams, nonrigid_register
from .synth import SynthGarment, load_garment, render_silhouette, \
    shell_occupancy_field
from .template import CATEGORY_LINES, ClothCategory, activate, \
    active_feature_lines, build_template, extract_active_mesh

VALID_STAGES = ("pose", "lines", "implicit", "register")
VALID_ORACLES = ("category", "pose", "lines", "occupancy")

# canonical reconstruction volume (x, y, z)
CANONICAL_BOUNDS = (np.array([-0.6, -0.8, -0.6]), np.array([0.6, 0.4, 0.6]))

# stage subsets reproducing the partial-pipeline ablation variants
ABLATION_STAGES: dict[str, tuple[str, ...]] = {
    "Mt+GCN": ("lines",),
    "Mp+GCN": ("pose", "lines"),
    "Ml+GCN": ("pose", "lines", "implicit"),
    "Mt+Regis": ("implicit", "register"),
}


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 3)."""


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline knobs; defaults match the published values where they
    exist (line-edge weight 0.2, pose regularizer 1e-5, refinement weights,
    60-degree cone, sigma 0.01, Adam lr 5e-5, batch 8, 50 epochs)."""

    stages: tuple[str, ...] = VALID_STAGES
    oracles: tuple[str, ...] = ()
    lambda_edge: float = 0.2
    lambda_reg: float = 1e-5
    refine_lambda_nor: float = 1.6e-4
    refine_lambda_lap: float = 1.0
    refine_lambda_med: float = 0.5
    refine_lambda_line: float = 1.0
    refine_lambda_fed: float = 0.5
    refine_lambda_chm: float = 1.0
    max_angle_deg: float = 60.0
    sigma: float = 0.01
    mu: float = 1.0
    mu_decay: float = 0.5
    mu_floor: float = 0.05
    register_iterations: int = 10
    lr: float = 5e-5
    batch_size: int = 8
    epochs: int = 50
    grid_resolution: int = 128
    raster_size: int = 64
    shell_delta: float = 0.0
    shell_width: float = 0.02
    eval_samples: int = 1024
    seed: int = 0

    def __post_init__(self):
        for s in self.stages:
            if s not in VALID_STAGES:
                raise ConfigError(f"unknown stage '{s}'")
        for o in self.oracles:
            if o not in VALID_ORACLES:
                raise ConfigError(f"unknown oracle '{o}'")
        if self.grid_resolution < 8 or self.grid_resolution > 256:
            raise ConfigError("grid_resolution must be in [8, 256]")
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "oracles", tuple(self.oracles))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2,
                          sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "PipelineConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        names = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("stages", "oracles"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return PipelineConfig(**raw)

    def register_params(self) -> RegisterParams:
        return RegisterParams(self.max_angle_deg, self.sigma, self.mu,
                              self.mu_decay, self.mu_floor,
                              self.register_iterations)


# ---------------------------------------------------------------------------
# classifier (nearest centroid over silhouette pyramids)

@dataclass
class ClassifierWeights:
    centroids: dict[ClothCategory, np.ndarray]


def train_classifier(items) -> ClassifierWeights:
    """items: iterable of (SilhouetteDescriptor, ClothCategory)."""
    sums: dict[ClothCategory, list] = {}
    for desc, cat in items:
        sums.setdefault(cat, []).append(desc.pyramid)
    if not sums:
        raise ValueError("classifier training set must be non-empty")
    return ClassifierWeights(
        {cat: np.mean(vecs, axis=0) for cat, vecs in sums.items()})


def classify(descriptor: SilhouetteDescriptor,
             model: ClassifierWeights | None,
             override: ClothCategory | None = None):
    """Returns (category, confidence). An oracle override wins with
    confidence 1; otherwise nearest centroid, confidence from the margin."""
    if override is not None:
        return override, 1.0
    if model is None or not model.centroids:
        raise ValueError("no trained classifier and no oracle override")
    cats = sorted(model.centroids, key=lambda c: c.value)
    d = np.array([np.linalg.norm(descriptor.pyramid - model.centroids[c])
                  for c in cats])
    order = np.argsort(d)
    best = order[0]
    if len(cats) == 1:
        return cats[best], 1.0
    d1, d2 = d[best], d[order[1]]
    return cats[best], float(d2 / max(d1 + d2, 1e-12))


def save_classifier(path: str, model: ClassifierWeights):
    with open(path, "w") as fh:
        json.dump({c.value: v.tolist() for c, v in model.centroids.items()},
                  fh, sort_keys=True)


def load_classifier(path: str) -> ClassifierWeights:
    with open(path) as fh:
        raw = json.load(fh)
    return ClassifierWeights(
        {ClothCategory(k): np.asarray(v) for k, v in raw.items()})


@dataclass
class PipelineWeights:
    classifier: ClassifierWeights | None = None
    gcn: GCNWeights | None = None
    occ: MLPWeights | None = None


def load_gcn_weights(path: str) -> GCNWeights:
    w = init_gcn_weights()
    load_weights_into(path, w)
    return w


def load_occ_weights(path: str) -> MLPWeights:
    from .nets import DESCRIPTOR_DIM
    w = init_mlp_weights(0, (3 + DESCRIPTOR_DIM, 64, 64, 1))
    load_weights_into(path, w)
    return w


# ---------------------------------------------------------------------------
# pipeline

@dataclass
class StageArtifacts:
    """Each field is populated iff its stage ran."""

    category: ClothCategory | None = None
    confidence: float | None = None
    pose: Pose | None = None
    m_t: Mesh | None = None
    m_p: Mesh | None = None
    lines: tuple[FeatureLine, ...] | None = None
    line_targets: np.ndarray | None = None
    m_l: Mesh | None = None
    m_i: Mesh | None = None
    m_r: Mesh | None = None
    timings: dict = field(default_factory=dict)
    failure: dict | None = None

    def final_mesh(self) -> Mesh | None:
        for m in (self.m_r, self.m_l, self.m_p, self.m_t):
            if m is not None:
                return m
        return None


def _match_line_targets(lines, positions, annotations):
    """Per-vertex oracle targets: nearest point of the annotation matched to
    each line (same kind, closest centroid)."""
    from scipy.spatial import cKDTree
    ann_by_kind: dict = {}
    for a in annotations:
        ann_by_kind.setdefault(a.kind, []).append(a)
    targets = positions.copy()
    for fl in lines:
        anns = ann_by_kind.get(fl.kind)
        if not anns:
            raise ValueError(f"no annotation for line kind '{fl.kind.value}'")
        seg = positions[fl.vertex_indices]
        c = seg.mean(axis=0)
        j = int(np.argmin([np.linalg.norm(a.centroid() - c) for a in anns]))
        ann = anns.pop(j)
        _, nn = cKDTree(ann.points.points).query(seg)
        targets[fl.vertex_indices] = ann.points.points[nn]
    return targets


def run_pipeline(garment: SynthGarment, config: PipelineConfig,
                 weights: PipelineWeights | None = None,
                 out_dir: str | None = None) -> StageArtifacts:
    """Run the enabled stages; persists every produced intermediate when
    out_dir is given. On a stage exception the artifacts produced so far are
    returned (and persisted) with a machine-readable failure record."""
    weights = weights or PipelineWeights()
    art = StageArtifacts()
    try:
        _run_stages(garment, config, weights, art)
    except Exception as exc:  # persist last good artifacts + failure record
        stage = exc.stage if isinstance(exc, StageFailure) else "setup"
        cause = exc.cause if isinstance(exc, StageFailure) else exc
        art.failure = {"stage": stage, "error": f"{type(cause).__name__}: {cause}"}
    if out_dir is not None:
        persist_artifacts(out_dir, art)
    return art


def _timed(art: StageArtifacts, stage: str):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, exc_type, exc, tb):
            art.timings[stage] = time.perf_counter() - self.t0
            if exc is not None and not isinstance(exc, StageFailure):
                raise StageFailure(stage, exc) from exc
    return _Ctx()


def _run_stages(garment, config, weights, art):
    descriptor = render_silhouette(garment, config.raster_size)

    with _timed(art, "classify"):
        override = garment.category if "category" in config.oracles else None
        art.category, art.confidence = classify(descriptor,
                                                weights.classifier, override)

    with _timed(art, "template"):
        template = activate(build_template(), art.category)
        m_t, index_map = extract_active_mesh(template)
        art.m_t = m_t
        art.lines = active_feature_lines(template, index_map)

    current = m_t
    if "pose" in config.stages:
        with _timed(art, "pose"):
            if "pose" in config.oracles:
                pose = garment.pose
            else:
                pose = fit_pose_to_annotations(template.body,
                                               garment.annotations)
            art.pose = pose
            posed = skin_points(template.body, pose,
                                template.body.rest_mesh.vertices,
                                template.body.skin_weights)
            art.m_p = Mesh(posed[template.activation], m_t.faces)
            current = art.m_p

    if "lines" in config.stages:
        with _timed(art, "lines"):
            positions = current.vertices
            if "lines" in config.oracles:
                targets = _match_line_targets(art.lines, positions,
                                              garment.annotations)
            else:
                if weights.gcn is None:
                    raise ValueError("line stage needs trained weights or "
                                     "the 'lines' oracle")
                graph = build_line_graph(art.lines, positions, descriptor)
                disp = predict_line_displacements(graph, weights.gcn)
                targets = positions.copy()
                for (kind, start, stop), fl in zip(graph.slices, art.lines):
                    targets[fl.vertex_indices] = \
                        graph.node_positions[start:stop] + disp[start:stop]
            handle_idx = np.unique(np.concatenate(
                [fl.vertex_indices for fl in art.lines]))
            art.line_targets = targets[handle_idx]
            handles = {int(i): targets[i] for i in handle_idx}
            art.m_l = solve(build_system(current, handles))
            current = art.m_l

    if "implicit" in config.stages:
        with _timed(art, "implicit"):
            if "occupancy" in config.oracles:
                field_fn = shell_occupancy_field(
                    garment.ground_truth_mesh, config.shell_delta,
                    config.shell_width, seed=config.seed)
            else:
                if weights.occ is None:
                    raise ValueError("implicit stage needs trained weights "
                                     "or the 'occupancy' oracle")
                occ = weights.occ

                def evaluate(points):
                    return occupancy_probability(occ, descriptor, points)

                field_fn = OccupancyField(evaluate, "learned")
            art.m_i = extract_surface(field_fn, config.grid_resolution,
                                      CANONICAL_BOUNDS)

    if "register" in config.stages:
        with _timed(art, "register"):
            if art.m_i is None:
                raise ValueError("register stage requires the implicit stage")
            result = nonrigid_register(current, art.m_i,
                                       config.register_params())
            art.m_r = result.mesh


def persist_artifacts(out_dir: str, art: StageArtifacts):
    os.makedirs(out_dir, exist_ok=True)
    for name in ("m_t", "m_p", "m_l", "m_i", "m_r"):
        mesh = getattr(art, name)
        if mesh is not None:
            meshio.write_obj(os.path.join(out_dir, name + ".obj"), mesh)
    record = {
        "category": art.category.value if art.category else None,
        "confidence": art.confidence,
        "pose": art.pose.to_json_dict() if art.pose else None,
        "timings": art.timings,
        "failure": art.failure,
    }
    with open(os.path.join(out_dir, "artifacts.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# benchmark

def worker_count() -> int:
    cap = os.environ.get("GARMENT_PIPELINE_THREADS")
    if cap:
        return max(1, int(cap))
    return min(4, os.cpu_count() or 1)


def run_benchmark(dataset_dir: str, config: PipelineConfig,
                  weights: PipelineWeights | None = None,
                  variants: tuple[str, ...] = ("m_p", "m_l", "m_r"),
                  out_dir: str | None = None) -> BenchmarkReport:
    """Pipeline + metrics per dataset entry; corrupt entries are skipped with
    a warning, and the run fails only if nothing loads."""
    entries = []
    for name in sorted(os.listdir(dataset_dir)):
        path = os.path.join(dataset_dir, name)
        if not os.path.isdir(path):
            continue
        try:
            entries.append((name, load_garment(path)))
        except Exception as exc:
            warnings.warn(f"skipping corrupt entry '{name}': {exc}")
    if not entries:
        raise ValueError("no loadable dataset entries")

    def one(item):
        name, garment = item
        art = run_pipeline(garment, config, weights,
                           out_dir=os.path.join(out_dir, name)
                           if out_dir else None)
        if art.failure is not None:
            raise StageFailure(art.failure["stage"],
                               RuntimeError(art.failure["error"]))
        gt = sample_surface(garment.ground_truth_mesh,
                            4 * config.eval_samples, seed=config.seed)
        rows = []
        for variant in variants:
            mesh = getattr(art, variant)
            if mesh is None:
                continue
            rec = evaluate_model(mesh, gt, config.eval_samples, config.seed)
            rows.append((name, garment.category.value, variant, rec))
        return rows

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(one, entries))

    report = BenchmarkReport()
    for rows in results:
        for name, category, variant, rec in rows:
            report.add(name, category, rec["cd"], rec["emd"],
                       rec["n_samples"], rec["seed"], variant)
    if out_dir is not None:
        from .report import write_report
        write_report(out_dir, report)
    return report
