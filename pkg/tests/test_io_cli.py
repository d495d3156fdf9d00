import json
import os

import numpy as np
import pytest

from rb4dvar import io as rio
from rb4dvar.cli import cli_main
from rb4dvar.errors import ConfigurationError

SMALL_CONFIG = {
    "mesh": {"h": 0.25},
    "time": {"tau": 0.1, "num_steps": 10},
    "truth": {"mu_true": 30.0, "noise_std": 0.01, "seed": 0},
    "training": {"n_train": 3, "n_max": 2},
    "evaluation": {"n_test": 2, "N_list": [1, 2]},
}


def test_config_hash_stable_and_order_independent():
    h1 = rio.config_hash({"a": 1, "b": [1, 2]})
    h2 = rio.config_hash({"b": [1, 2], "a": 1})
    assert h1 == h2 and len(h1) == 64
    assert rio.config_hash({"a": 2}) != h1


def test_model_save_load_roundtrip(tmp_path, small_fom):
    path = tmp_path / "model.npz"
    rio.save_model(path, small_fom, meta={"k": "v"})
    fom2 = rio.load_model(path)
    assert fom2.n_y == small_fom.n_y
    assert abs(fom2.M - small_fom.M).max() == 0
    assert abs(fom2.X_Y - small_fom.X_Y).max() == 0
    for (c1, m1), (c2, m2) in zip(small_fom.A.terms, fom2.A.terms):
        assert c1 == c2 and abs(m1 - m2).max() == 0
    assert np.array_equal(fom2.C, small_fom.C)
    assert fom2.tau == small_fom.tau and fom2.K == small_fom.K
    assert np.array_equal(fom2.mesh.nodes, small_fom.mesh.nodes)


def test_greedy_save_load_roundtrip(tmp_path, small_greedy):
    result = small_greedy["combined"]
    path = tmp_path / "greedy.npz"
    rio.save_greedy(path, result)
    back = rio.load_greedy(path)
    assert back.variant == "combined"
    assert np.array_equal(back.basis.V_y, result.basis.V_y)
    assert np.array_equal(back.basis.V_u0, result.basis.V_u0)
    assert np.array_equal(back.basis.V_u, result.basis.V_u)
    assert back.basis.history == result.basis.history
    assert back.constants.gamma_b == result.constants.gamma_b
    assert len(back.trace) == len(result.trace)
    assert back.trace[0].mu_selected == result.trace[0].mu_selected


def test_truth_save_load_roundtrip(tmp_path, small_fom, small_truth):
    path = tmp_path / "truth.npz"
    rio.save_truth(path, small_truth)
    back = rio.load_truth(path)
    assert np.array_equal(back.z_d, small_truth.z_d)
    assert back.mu_true == small_truth.mu_true
    assert back.seed == small_truth.seed


def test_artifact_kind_mismatch_detected(tmp_path, small_fom, small_truth):
    path = tmp_path / "truth.npz"
    rio.save_truth(path, small_truth)
    with pytest.raises(ConfigurationError):
        rio.load_model(path)
    with pytest.raises(ConfigurationError):
        rio.load_greedy(path)
    with pytest.raises(ConfigurationError):
        rio.load_model(tmp_path / "missing.npz")


def test_csv_writer_roundtrip_format(tmp_path):
    path = tmp_path / "t.csv"
    rows = [{"a": 1, "b": 1.0 / 3.0, "c": "x", "d": None}]
    rio.write_csv(path, rows, ["a", "b", "c", "d"])
    text = path.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "a,b,c,d"
    fields = lines[1].split(",")
    assert fields[0] == "1"
    assert float(fields[1]) == 1.0 / 3.0  # %.17g round-trips exactly
    assert fields[2] == "x" and fields[3] == ""
    # no leftover temp files from atomic writes
    assert [p for p in os.listdir(tmp_path) if p.endswith(".tmp")] == []


@pytest.fixture(scope="module")
def cli_artifacts(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "config.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    model = d / "model.npz"
    truth = d / "truth.npz"
    assert cli_main(["assemble", "--config", str(cfg),
                     "--out", str(model)]) == 0
    assert cli_main(["synthesize", "--config", str(cfg), "--model",
                     str(model), "--out", str(truth)]) == 0
    return d, cfg, model, truth


def test_cli_pipeline_runs(cli_artifacts, capsys):
    d, cfg, model, truth = cli_artifacts
    basis = d / "greedy.npz"
    assert cli_main(["train-strong", "--config", str(cfg), "--model",
                     str(model), "--truth", str(truth),
                     "--out", str(basis)]) == 0
    assert cli_main(["sweep", "--config", str(cfg), "--model", str(model),
                     "--truth", str(truth), "--basis", str(basis),
                     "--out", str(d / "sweep.csv")]) == 0
    assert cli_main(["estimate", "--config", str(cfg), "--model", str(model),
                     "--truth", str(truth), "--basis", str(basis),
                     "--out", str(d / "estimate.csv")]) == 0
    assert cli_main(["report", "--basis", str(basis),
                     "--out", str(d / "trace.csv")]) == 0
    out = capsys.readouterr().out
    assert "max_rel_bound" in out
    sweep = (d / "sweep.csv").read_text().splitlines()
    assert sweep[0].startswith("variant,N,")
    assert len(sweep) == 1 + 2 * 2  # two dimensions x two test parameters


def test_cli_determinism(cli_artifacts):
    d, cfg, model, truth = cli_artifacts
    basis = d / "greedy.npz"
    out1 = d / "sweep1.csv"
    out2 = d / "sweep2.csv"
    for out in (out1, out2):
        assert cli_main(["sweep", "--config", str(cfg), "--model", str(model),
                         "--truth", str(truth), "--basis", str(basis),
                         "--out", str(out)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mesh": {"h": 0.3}}))
    code = cli_main(["assemble", "--config", str(bad),
                     "--out", str(tmp_path / "m.npz")])
    assert code == 2
    err = capsys.readouterr().err
    assert "mesh.h" in err

    notjson = tmp_path / "nj.json"
    notjson.write_text("{")
    assert cli_main(["assemble", "--config", str(notjson),
                     "--out", str(tmp_path / "m.npz")]) == 2
    assert cli_main(["assemble", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "m.npz")]) == 2


def test_cli_usage_error(capsys):
    assert cli_main(["no-such-command"]) == 2
    assert cli_main(["assemble"]) == 2  # missing required options
