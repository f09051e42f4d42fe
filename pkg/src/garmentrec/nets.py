"""Image-conditioned feature-line GCN, occupancy MLP and their training loops.

The image encoder is a pooled silhouette pyramid: a binary orthographic front
raster mean-pooled at three scales (8/4/2 cells per side) into an 84-dim
descriptor. GCN nodes are the active feature-line vertices; each node gathers
the pyramid cell values under its projected 2D position as its image feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Adam, Tensor
from .lines import DEFAULT_LAMBDA_EDGE, FeatureLineAnnotation, LandmarkKind

RASTER_SIZE = 64
PYRAMID_CELLS = (8, 4, 2)
DESCRIPTOR_DIM = sum(c * c for c in PYRAMID_CELLS)  # 84

# orthographic front (+z) view window: (x_min, x_max), (y_min, y_max)
VIEW_WINDOW = ((-0.6, 0.6), (-0.8, 0.4))

DEFAULT_LR = 5e-5
DEFAULT_BATCH_SIZE = 8
DEFAULT_EPOCHS = 50
DEFAULT_HIDDEN = 64
DEFAULT_GCN_LAYERS = 3


@dataclass(frozen=True)
class SilhouetteDescriptor:
    """Binary front raster plus its 3-scale pooled occupancy pyramid."""

    raster: np.ndarray            # (H, W) in {0, 1}
    pyramid: np.ndarray           # (84,) in [0, 1]

    def __post_init__(self):
        r = np.asarray(self.raster)
        if not np.isin(r, (0, 1)).all():
            raise ValueError("raster entries must be 0 or 1")
        p = np.asarray(self.pyramid, dtype=np.float64).reshape(-1)
        if p.min(initial=0.0) < 0 or p.max(initial=0.0) > 1:
            raise ValueError("pyramid entries must lie in [0, 1]")
        r = np.ascontiguousarray(r, dtype=np.uint8)
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "raster", r)
        object.__setattr__(self, "pyramid", p)


def pooled_pyramid(raster: np.ndarray) -> np.ndarray:
    """Mean occupancy per cell at the three pyramid scales, flattened."""
    r = np.asarray(raster, dtype=np.float64)
    h, w = r.shape
    parts = []
    for c in PYRAMID_CELLS:
        pooled = r.reshape(c, h // c, c, w // c).mean(axis=(1, 3))
        parts.append(pooled.reshape(-1))
    return np.concatenate(parts)


def descriptor_from_raster(raster: np.ndarray) -> SilhouetteDescriptor:
    return SilhouetteDescriptor(raster, pooled_pyramid(raster))


def project_to_window(points: np.ndarray) -> np.ndarray:
    """3D points -> (u, v) in [0, 1]^2 under the canonical front window."""
    (x0, x1), (y0, y1) = VIEW_WINDOW
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u = (p[:, 0] - x0) / (x1 - x0)
    v = (p[:, 1] - y0) / (y1 - y0)
    return np.clip(np.stack([u, v], axis=1), 0.0, 1.0 - 1e-9)


def gather_image_features(descriptor: SilhouetteDescriptor,
                          points: np.ndarray) -> np.ndarray:
    """Per-point feature: pyramid cell value at each scale + projected (u, v)."""
    uv = project_to_window(points)
    feats = [uv]
    off = 0
    for c in PYRAMID_CELLS:
        cell = (np.floor(uv[:, 1] * c).astype(int) * c
                + np.floor(uv[:, 0] * c).astype(int))
        feats.append(descriptor.pyramid[off + cell][:, None])
        off += c * c
    return np.concatenate(feats, axis=1)


NODE_FEATURE_DIM = 2 + len(PYRAMID_CELLS)


@dataclass(frozen=True)
class LineGraph:
    """All active feature-line loops as one graph (every node has degree 2)."""

    node_positions: np.ndarray          # (N, 3)
    prev_index: np.ndarray              # (N,)
    next_index: np.ndarray              # (N,)
    node_features: np.ndarray           # (N, F)
    slices: tuple[tuple[LandmarkKind, int, int], ...]

    @property
    def n_nodes(self) -> int:
        return len(self.node_positions)

    def edges(self) -> np.ndarray:
        e = np.stack([np.arange(self.n_nodes), self.next_index], axis=1)
        return np.sort(e, axis=1)


def build_line_graph(feature_lines, vertices: np.ndarray,
                     descriptor: SilhouetteDescriptor) -> LineGraph:
    """Assemble the GCN graph from feature-line loops on a (posed) mesh."""
    positions, prevs, nexts, slices = [], [], [], []
    off = 0
    for fl in feature_lines:
        n = len(fl.vertex_indices)
        positions.append(vertices[fl.vertex_indices])
        local = np.arange(n)
        prevs.append(off + (local - 1) % n)
        nexts.append(off + (local + 1) % n)
        slices.append((fl.kind, off, off + n))
        off += n
    pos = np.concatenate(positions)
    return LineGraph(
        node_positions=pos,
        prev_index=np.concatenate(prevs),
        next_index=np.concatenate(nexts),
        node_features=gather_image_features(descriptor, pos),
        slices=tuple(slices),
    )


# ---------------------------------------------------------------------------
# GCN

@dataclass
class GCNWeights:
    layers: list[dict[str, Tensor]]
    w_out: Tensor
    b_out: Tensor

    def parameters(self) -> list[Tensor]:
        ps = []
        for layer in self.layers:
            ps.extend(layer.values())
        ps += [self.w_out, self.b_out]
        return ps


def init_gcn_weights(seed: int = 0, hidden: int = DEFAULT_HIDDEN,
                     n_layers: int = DEFAULT_GCN_LAYERS,
                     feature_dim: int = NODE_FEATURE_DIM) -> GCNWeights:
    rng = np.random.Generator(np.random.Philox(key=seed))
    layers = []
    d_in = 3
    for _ in range(n_layers):
        scale = 1.0 / np.sqrt(max(d_in, hidden))
        layers.append({
            "w_self": Tensor(rng.normal(0, scale, (d_in, hidden)), requires_grad=True),
            "w_neigh": Tensor(rng.normal(0, scale, (d_in, hidden)), requires_grad=True),
            "w_img": Tensor(rng.normal(0, scale, (feature_dim, hidden)), requires_grad=True),
            "b": Tensor(np.zeros(hidden), requires_grad=True),
        })
        d_in = hidden
    w_out = Tensor(rng.normal(0, 1.0 / np.sqrt(hidden), (d_in, 3)), requires_grad=True)
    return GCNWeights(layers, w_out, Tensor(np.zeros(3), requires_grad=True))


def gcn_forward(graph: LineGraph, weights: GCNWeights) -> Tensor:
    """Per-node 3D displacement. Each layer mixes self state, the mean of the
    two loop neighbours and the node's image feature."""
    h = Tensor(graph.node_positions)
    feat = Tensor(graph.node_features)
    for layer in weights.layers:
        if h.shape[1] != layer["w_self"].shape[0]:
            raise ValueError("weight shape does not match node state width")
        neigh = (h.gather_rows(graph.prev_index)
                 + h.gather_rows(graph.next_index)) * 0.5
        h = (h @ layer["w_self"] + neigh @ layer["w_neigh"]
             + feat @ layer["w_img"] + layer["b"]).relu()
    return h @ weights.w_out + weights.b_out


# ---------------------------------------------------------------------------
# differentiable feature-line losses

def line_loss_t(pred: Tensor, annotation_points: np.ndarray) -> Tensor:
    ann = np.asarray(annotation_points, dtype=np.float64).reshape(-1, 3)
    n = pred.shape[0]
    pred_sq = (pred * pred).sum(axis=1).reshape(n, 1)
    ann_sq = (ann**2).sum(axis=1)[None, :]
    d2 = pred_sq + Tensor(ann_sq) - 2.0 * (pred @ Tensor(ann.T))
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


def edge_reg_t(pred: Tensor) -> Tensor:
    n = pred.shape[0]
    nxt = pred.gather_rows((np.arange(n) + 1) % n)
    d = nxt - pred
    return (d * d).sum(axis=1).mean()


def fitting_loss_t(pred: Tensor, graph: LineGraph, annotations,
                   lambda_edge: float = DEFAULT_LAMBDA_EDGE):
    """Differentiable L_fitting; returns (total, line term value, edge term value)."""
    ann_by_kind: dict[LandmarkKind, list[FeatureLineAnnotation]] = {}
    for a in annotations:
        ann_by_kind.setdefault(a.kind, []).append(a)
    total = None
    line_val = 0.0
    edge_val = 0.0
    for kind, start, stop in graph.slices:
        anns = ann_by_kind.get(kind)
        if not anns:
            raise ValueError(f"no annotation for active line kind '{kind.value}'")
        c = graph.node_positions[start:stop].mean(axis=0)
        j = int(np.argmin([np.linalg.norm(a.centroid() - c) for a in anns]))
        ann = anns.pop(j) if len(anns) > 1 else anns[j]
        seg = pred.gather_rows(np.arange(start, stop))
        ll = line_loss_t(seg, ann.points.points)
        er = edge_reg_t(seg)
        term = ll + lambda_edge * er
        total = term if total is None else total + term
        line_val += float(ll.data)
        edge_val += float(er.data)
    return total, line_val, edge_val


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    hidden: int = DEFAULT_HIDDEN
    gcn_layers: int = DEFAULT_GCN_LAYERS
    lambda_edge: float = DEFAULT_LAMBDA_EDGE


@dataclass(frozen=True)
class LineTrainItem:
    graph: LineGraph
    annotations: tuple[FeatureLineAnnotation, ...]


def train_line_regressor(dataset: list[LineTrainItem],
                         config: TrainConfig = TrainConfig()):
    """Adam on L_fitting over the active lines of every item.

    Returns (weights, history) where history rows are
    (epoch, L_line, L_edge, total) averaged per item.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    weights = init_gcn_weights(config.seed, config.hidden, config.gcn_layers)
    opt = Adam(weights.parameters(), lr=config.lr)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        ep_line = ep_edge = ep_total = 0.0
        for bstart in range(0, len(order), config.batch_size):
            batch = order[bstart:bstart + config.batch_size]
            opt.zero_grad()
            loss = None
            for i in batch:
                item = dataset[i]
                disp = gcn_forward(item.graph, weights)
                pred = Tensor(item.graph.node_positions) + disp
                term, lv, ev = fitting_loss_t(pred, item.graph,
                                              list(item.annotations),
                                              config.lambda_edge)
                loss = term if loss is None else loss + term
                ep_line += lv
                ep_edge += ev
                ep_total += float(term.data)
            (loss * (1.0 / len(batch))).backward()
            opt.step()
        n = len(dataset)
        history.append((epoch, ep_line / n, ep_edge / n, ep_total / n))
    return weights, history


def predict_line_displacements(graph: LineGraph, weights: GCNWeights) -> np.ndarray:
    return gcn_forward(graph, weights).data


# ---------------------------------------------------------------------------
# occupancy MLP

@dataclass
class MLPWeights:
    layers: list[tuple[Tensor, Tensor]]

    def parameters(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]


def init_mlp_weights(seed: int, dims: tuple[int, ...]) -> MLPWeights:
    rng = np.random.Generator(np.random.Philox(key=seed))
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = Tensor(rng.normal(0, np.sqrt(2.0 / d_in), (d_in, d_out)),
                   requires_grad=True)
        b = Tensor(np.zeros(d_out), requires_grad=True)
        layers.append((w, b))
    return MLPWeights(layers)


def mlp_forward(x: Tensor, weights: MLPWeights) -> Tensor:
    h = x
    for i, (w, b) in enumerate(weights.layers):
        h = h @ w + b
        if i < len(weights.layers) - 1:
            h = h.relu()
    return h


@dataclass(frozen=True)
class OccTrainItem:
    descriptor: SilhouetteDescriptor
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("occupancy labels must be 0 or 1")


@dataclass(frozen=True)
class OccTrainConfig:
    lr: float = 1e-3
    batch_size: int = 512
    epochs: int = 60
    seed: int = 0
    hidden: int = 64


def train_occupancy(dataset: list[OccTrainItem],
                    config: OccTrainConfig = OccTrainConfig()):
    """Binary cross-entropy training of the point-occupancy MLP.

    Returns (weights, loss_history).
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    dims = (3 + DESCRIPTOR_DIM, config.hidden, config.hidden, 1)
    weights = init_mlp_weights(config.seed, dims)
    opt = Adam(weights.parameters(), lr=config.lr)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    inputs = [np.concatenate([
        item.points,
        np.tile(item.descriptor.pyramid, (len(item.points), 1))], axis=1)
        for item in dataset]
    labels = [np.asarray(item.labels, dtype=np.float64) for item in dataset]
    history = []
    for epoch in range(config.epochs):
        ep_loss, n_batches = 0.0, 0
        for i in rng.permutation(len(dataset)):
            order = rng.permutation(len(labels[i]))
            for bs in range(0, len(order), config.batch_size):
                sel = order[bs:bs + config.batch_size]
                opt.zero_grad()
                logits = mlp_forward(Tensor(inputs[i][sel]), weights)
                loss = logits.reshape(-1).bce_with_logits(labels[i][sel])
                loss.backward()
                opt.step()
                ep_loss += float(loss.data)
                n_batches += 1
        history.append((epoch, ep_loss / n_batches))
    return weights, history


def occupancy_probability(weights: MLPWeights,
                          descriptor: SilhouetteDescriptor,
                          points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x = np.concatenate([pts, np.tile(descriptor.pyramid, (len(pts), 1))], axis=1)
    logits = mlp_forward(Tensor(x), MLPWeights(
        [(Tensor(w.data), Tensor(b.data)) for w, b in weights.layers]))
    return 1.0 / (1.0 + np.exp(-np.clip(logits.data.reshape(-1), -60, 60)))


# ---------------------------------------------------------------------------
# serialization

def save_weights(path: str, weights, config: dict):
    import json
    tensors = weights.parameters()
    header = {"shapes": [list(t.shape) for t in tensors], "config": config}
    blob = np.concatenate([t.data.ravel() for t in tensors])
    with open(path, "wb") as fh:
        h = json.dumps(header, sort_keys=True).encode()
        fh.write(len(h).to_bytes(8, "little"))
        fh.write(h)
        fh.write(blob.astype("<f8").tobytes())


def load_weights_into(path: str, weights):
    import json
    with open(path, "rb") as fh:
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen))
        blob = np.frombuffer(fh.read(), dtype="<f8")
    off = 0
    tensors = weights.parameters()
    if [list(t.shape) for t in tensors] != header["shapes"]:
        raise ValueError("weight shapes do not match file header")
    for t in tensors:
        n = t.data.size
        t.data = blob[off:off + n].reshape(t.shape).copy()
        off += n
    return header["config"]
