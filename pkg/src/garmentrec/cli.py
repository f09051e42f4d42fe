"""Command-line interface.

Subcommands: gen-data, train-classifier, train-lines, train-occ, reconstruct,
evaluate, ablate. Exit codes: 0 success, 2 stage failure, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .body import skin_points
from .nets import OccTrainConfig, OccTrainItem, TrainConfig, LineTrainItem, \
    build_line_graph, descriptor_from_raster, save_weights, train_occupancy, \
    train_line_regressor
from .pipeline import ABLATION_STAGES, ConfigError, PipelineConfig, \
    PipelineWeights, load_classifier, load_gcn_weights, load_occ_weights, \
    run_benchmark, run_pipeline, save_classifier, train_classifier
from .synth import generate, load_garment, occupancy_labels, read_pgm, \
    render_silhouette, save_garment
from .template import ClothCategory, activate, active_feature_lines, \
    build_template, extract_active_mesh


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--stages", help="comma-separated stage subset")
    p.add_argument("--oracle", action="append", default=None,
                   help="oracle substitute (category|pose|lines|occupancy); "
                        "repeatable or comma-separated")
    p.add_argument("--resolution", type=int, help="implicit grid resolution")
    p.add_argument("--classifier-weights")
    p.add_argument("--gcn-weights")
    p.add_argument("--occ-weights")


def _build_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            config = PipelineConfig.from_json(fh.read())
    else:
        config = PipelineConfig()
    import dataclasses
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "stages", None):
        updates["stages"] = tuple(s for s in args.stages.split(",") if s)
    if getattr(args, "oracle", None):
        oracles = []
        for item in args.oracle:
            oracles += [o for o in item.split(",") if o]
        updates["oracles"] = tuple(oracles)
    if getattr(args, "resolution", None) is not None:
        updates["grid_resolution"] = args.resolution
    return dataclasses.replace(config, **updates) if updates else config


def _load_weights(args) -> PipelineWeights:
    w = PipelineWeights()
    if getattr(args, "classifier_weights", None):
        w.classifier = load_classifier(args.classifier_weights)
    if getattr(args, "gcn_weights", None):
        w.gcn = load_gcn_weights(args.gcn_weights)
    if getattr(args, "occ_weights", None):
        w.occ = load_occ_weights(args.occ_weights)
    return w


def _dataset_dirs(path: str) -> list[str]:
    return sorted(os.path.join(path, d) for d in os.listdir(path)
                  if os.path.isdir(os.path.join(path, d)))


def _oracle_posed_lines(garment):
    """(descriptor, line loops, posed line vertex positions) for training."""
    template = activate(build_template(), garment.category)
    _, index_map = extract_active_mesh(template)
    lines = active_feature_lines(template, index_map)
    posed = skin_points(template.body, garment.pose,
                        template.body.rest_mesh.vertices,
                        template.body.skin_weights)
    return lines, posed[template.activation]


def cmd_gen_data(args) -> int:
    cats = [ClothCategory(c) for c in args.categories.split(",")] \
        if args.categories else list(ClothCategory)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        cat = cats[i % len(cats)]
        g = generate(cat, args.pose_magnitude, args.wrinkle_amplitude,
                     seed=args.seed + i)
        save_garment(os.path.join(args.out, f"g{i:03d}"), g,
                     {"seed": args.seed + i,
                      "pose_magnitude": args.pose_magnitude,
                      "wrinkle_amplitude": args.wrinkle_amplitude})
    print(f"wrote {args.count} garments to {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    items = []
    for d in _dataset_dirs(args.data):
        g = load_garment(d)
        desc = descriptor_from_raster(
            read_pgm(os.path.join(d, "silhouette.pgm")))
        items.append((desc, g.category))
    model = train_classifier(items)
    save_classifier(args.out, model)
    print(f"classifier over {len(items)} items -> {args.out}")
    return 0


def cmd_train_lines(args) -> int:
    dataset = []
    for d in _dataset_dirs(args.data):
        g = load_garment(d)
        desc = descriptor_from_raster(
            read_pgm(os.path.join(d, "silhouette.pgm")))
        lines, posed = _oracle_posed_lines(g)
        dataset.append(LineTrainItem(build_line_graph(lines, posed, desc),
                                     g.annotations))
    config = TrainConfig(epochs=args.epochs, seed=args.seed, lr=args.lr)
    weights, history = train_line_regressor(dataset, config)
    save_weights(args.out, weights, {"epochs": args.epochs, "seed": args.seed})
    first, last = history[0], history[-1]
    print(f"L_line {first[1]:.6f} -> {last[1]:.6f} over {len(history)} epochs")
    return 0


def cmd_train_occ(args) -> int:
    dataset = []
    for d in _dataset_dirs(args.data):
        g = load_garment(d)
        desc = descriptor_from_raster(
            read_pgm(os.path.join(d, "silhouette.pgm")))
        pts, labels = occupancy_labels(g, args.points, seed=args.seed)
        dataset.append(OccTrainItem(desc, pts, labels))
    config = OccTrainConfig(epochs=args.epochs, seed=args.seed)
    weights, history = train_occupancy(dataset, config)
    save_weights(args.out, weights, {"epochs": args.epochs, "seed": args.seed})
    print(f"occupancy BCE {history[0][1]:.4f} -> {history[-1][1]:.4f}")
    return 0


def cmd_reconstruct(args) -> int:
    config = _build_config(args)
    garment = load_garment(args.data)
    art = run_pipeline(garment, config, _load_weights(args), out_dir=args.out)
    if art.failure is not None:
        print(f"stage failure: {json.dumps(art.failure)}", file=sys.stderr)
        return 2
    produced = [n for n in ("m_t", "m_p", "m_l", "m_i", "m_r")
                if getattr(art, n) is not None]
    print(f"category={art.category.value} confidence={art.confidence:.3f} "
          f"meshes={','.join(produced)} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _build_config(args)
    report = run_benchmark(args.data, config, _load_weights(args),
                           out_dir=args.out)
    print(f"{'variant':<10}{'CD x1e-3':>12}{'EMD x1e2':>12}{'n':>5}")
    for v, agg in report.aggregates().items():
        print(f"{v:<10}{agg['mean_cd_x1e3']:>12.3f}"
              f"{agg['mean_emd_x1e2']:>12.3f}{agg['count']:>5}")
    return 0


def cmd_ablate(args) -> int:
    config = _build_config(args)
    weights = _load_weights(args)
    import dataclasses
    for name, stages in ABLATION_STAGES.items():
        variant_config = dataclasses.replace(config, stages=stages)
        out = os.path.join(args.out, name.replace("+", "_"))
        report = run_benchmark(args.data, variant_config, weights,
                               variants=("m_p", "m_l", "m_r"), out_dir=out)
        agg = report.aggregates()
        final = list(agg)[-1]
        print(f"{name:<10} final={final} "
              f"CD={agg[final]['mean_cd_x1e3']:.3f}x1e-3")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="garmentrec",
        description="Single-view garment reconstruction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pose-magnitude", type=float, default=0.2)
    p.add_argument("--wrinkle-amplitude", type=float, default=0.003)
    p.add_argument("--categories", help="comma-separated category names")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("train-lines")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_lines)

    p = sub.add_parser("train-occ")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_occ)

    p = sub.add_parser("reconstruct", help="run the pipeline on one garment")
    p.add_argument("--data", required=True, help="garment directory")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="benchmark a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the partial-pipeline variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 3
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
