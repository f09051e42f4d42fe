"""End-to-end command-line interface runs (in-process via main)."""

import json
import os

import numpy as np
import pytest

from garmentrec.cli import main


ORACLES = "--oracle", "category,pose,lines,occupancy"


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("cli_data"))
    code = main(["gen-data", "--out", root, "--count", "2", "--seed", "100",
                 "--pose-magnitude", "0.1", "--wrinkle-amplitude", "0",
                 "--categories", "short trousers,long skirt"])
    assert code == 0
    return root


def test_gen_data_writes_complete_entries(cli_dataset):
    entries = sorted(os.listdir(cli_dataset))
    assert entries == ["g000", "g001"]
    for e in entries:
        files = set(os.listdir(os.path.join(cli_dataset, e)))
        assert {"garment.obj", "closed.obj", "annotations.json", "pose.json",
                "silhouette.pgm", "meta.json"} <= files


def test_train_classifier_roundtrip(cli_dataset, tmp_path):
    out = str(tmp_path / "clf.json")
    assert main(["train-classifier", "--data", cli_dataset,
                 "--out", out]) == 0
    with open(out) as fh:
        blob = json.load(fh)
    assert set(blob) == {"short trousers", "long skirt"}


def test_train_lines_and_occ_write_weight_files(cli_dataset, tmp_path):
    gcn = str(tmp_path / "gcn.bin")
    occ = str(tmp_path / "occ.bin")
    assert main(["train-lines", "--data", cli_dataset, "--out", gcn,
                 "--epochs", "2"]) == 0
    assert main(["train-occ", "--data", cli_dataset, "--out", occ,
                 "--epochs", "2", "--points", "200"]) == 0
    from garmentrec.nets import init_gcn_weights, load_weights_into
    w = init_gcn_weights(seed=123)
    assert load_weights_into(gcn, w)["epochs"] == 2


def test_reconstruct_with_oracles(cli_dataset, tmp_path):
    out = str(tmp_path / "rec")
    code = main(["reconstruct", "--data", os.path.join(cli_dataset, "g000"),
                 "--out", out, *ORACLES, "--resolution", "48"])
    assert code == 0
    for name in ("m_t", "m_p", "m_l", "m_i", "m_r"):
        assert os.path.exists(os.path.join(out, name + ".obj"))


def test_evaluate_writes_report_and_figures(cli_dataset, tmp_path):
    out = str(tmp_path / "eval")
    code = main(["evaluate", "--data", cli_dataset, "--out", out,
                 *ORACLES, "--resolution", "48"])
    assert code == 0
    for fname in ("report.csv", "report.json", "metrics_by_variant.png",
                  "cd_per_model.png", "cd_histogram.png"):
        assert os.path.exists(os.path.join(out, fname))
    with open(os.path.join(out, "report.json")) as fh:
        blob = json.load(fh)
    assert {r["variant"] for r in blob["records"]} == {"m_p", "m_l", "m_r"}


def test_ablate_produces_variant_reports(cli_dataset, tmp_path):
    out = str(tmp_path / "abl")
    code = main(["ablate", "--data", cli_dataset, "--out", out,
                 *ORACLES, "--resolution", "48"])
    assert code == 0
    for variant in ("Mt_GCN", "Mp_GCN", "Ml_GCN", "Mt_Regis"):
        assert os.path.exists(os.path.join(out, variant, "report.json"))


def test_config_file_plus_seed_override(cli_dataset, tmp_path):
    from garmentrec.pipeline import PipelineConfig
    cfg = PipelineConfig(oracles=("category", "pose", "lines", "occupancy"),
                         grid_resolution=48, eval_samples=128)
    path = str(tmp_path / "cfg.json")
    with open(path, "w") as fh:
        fh.write(cfg.to_json())
    out = str(tmp_path / "rec2")
    code = main(["reconstruct", "--data", os.path.join(cli_dataset, "g001"),
                 "--out", out, "--config", path, "--seed", "77",
                 "--stages", "pose,lines"])
    assert code == 0
    assert os.path.exists(os.path.join(out, "m_l.obj"))
    assert not os.path.exists(os.path.join(out, "m_i.obj"))


def test_invalid_oracle_returns_config_error_code(cli_dataset, tmp_path):
    code = main(["reconstruct", "--data", os.path.join(cli_dataset, "g000"),
                 "--out", str(tmp_path / "x"), "--oracle", "bogus"])
    assert code == 3


def test_missing_data_returns_error_code(tmp_path):
    code = main(["reconstruct", "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "y"), *ORACLES])
    assert code == 2


def test_unknown_subcommand_exit_code():
    assert main(["frobnicate"]) == 3
