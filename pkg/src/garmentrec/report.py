"""Benchmark report rendering: delimited output plus matplotlib figures.

report.csv / report.json are byte-stable across reruns of the same
config+seed (no timestamps); figures are rendered alongside them.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .metrics import BenchmarkReport  # noqa: E402

PNG_METADATA = {"Software": "garmentrec"}  # keep PNG bytes run-independent


def write_report(out_dir: str, report: BenchmarkReport):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(report.to_csv())
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    render_figures(out_dir, report)


def render_figures(out_dir: str, report: BenchmarkReport):
    agg = report.aggregates()
    if not agg:
        return
    variants = list(agg)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].bar(variants, [agg[v]["mean_cd_x1e3"] for v in variants],
                color="steelblue")
    axes[0].set_ylabel("mean CD (x10$^{-3}$)")
    axes[0].set_title("Chamfer distance by stage output")
    axes[1].bar(variants, [agg[v]["mean_emd_x1e2"] for v in variants],
                color="indianred")
    axes[1].set_ylabel("mean EMD (x10$^{2}$)")
    axes[1].set_title("Earth Mover's distance by stage output")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "metrics_by_variant.png"),
                metadata=PNG_METADATA)
    plt.close(fig)

    # per-model CD traces across variants
    models = sorted({r["model_id"] for r in report.records})
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in models:
        xs, ys = [], []
        for i, v in enumerate(variants):
            rows = [r for r in report.records
                    if r["model_id"] == m and r["variant"] == v]
            if rows:
                xs.append(i)
                ys.append(rows[0]["cd"] * 1e3)
        ax.plot(xs, ys, marker="o", alpha=0.6, label=m)
    ax.set_xticks(range(len(variants)))
    ax.set_xticklabels(variants)
    ax.set_ylabel("CD (x10$^{-3}$)")
    ax.set_title("Per-model Chamfer distance across stages")
    if len(models) <= 12:
        ax.legend(fontsize="x-small", ncol=2)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "cd_per_model.png"),
                metadata=PNG_METADATA)
    plt.close(fig)

    # CD histogram of the final variant
    final = variants[-1]
    cds = np.array([r["cd"] * 1e3 for r in report.records
                    if r["variant"] == final])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(cds, bins=max(5, len(cds) // 2), color="seagreen",
            edgecolor="black")
    ax.set_xlabel(f"CD (x10$^{{-3}}$), variant '{final}'")
    ax.set_ylabel("models")
    ax.set_title("Final reconstruction quality")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "cd_histogram.png"),
                metadata=PNG_METADATA)
    plt.close(fig)
