import csv
import json
import math

import numpy as np
import pytest

from motzkin_tn import cli as cli_mod
from motzkin_tn.checkpoint import load_checkpoint, save_checkpoint
from motzkin_tn.cli import run
from motzkin_tn.mps import init_dense
from motzkin_tn.tensor import make_rng

TINY = ["--set", "n=6", "--set", "chi=3", "--set", "epochs=2", "--set", "train_fraction=0.5"]


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_mi_two_sites(tmp_path, capsys):
    out = tmp_path / "mi.csv"
    assert run(["mi", "--n", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open(encoding="utf-8")))
    assert len(rows) == 1
    assert (rows[0]["i"], rows[0]["j"], rows[0]["distance"]) == ("0", "1", "1")
    assert float(rows[0]["mi_nats"]) == pytest.approx(math.log(2.0), abs=1e-12)


def test_mi_by_distance(tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    assert run(["mi", "--n", "6", "--out", str(tmp_path / "mi.csv"), "--by-distance", str(curve)]) == 0
    rows = list(csv.DictReader(curve.open(encoding="utf-8")))
    assert [int(r["distance"]) for r in rows] == [1, 2, 3, 4, 5]


def test_mi_guard(tmp_path, capsys):
    assert run(["mi", "--n", "17", "--out", str(tmp_path / "mi.csv")]) == 2
    assert capsys.readouterr().err.startswith("error: guard: ")


def test_data_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert run(["data", "--n", "4", "--train-fraction", "1.0", "--out", str(a)]) == 0
    meta = _json_out(capsys)
    assert meta["lines"] == 9 and meta["valid"] == 9
    assert run(["data", "--n", "4", "--train-fraction", "1.0", "--out", str(b)]) == 0
    assert len(a.read_text(encoding="utf-8").splitlines()) == 9
    assert a.read_bytes() == b.read_bytes()


def test_train_then_eval_reproduces_metrics(tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert run(["train", *TINY, "--out-dir", str(run_dir)]) == 0
    final = _json_out(capsys)
    assert (run_dir / "metrics.csv").exists() and (run_dir / "config.ini").exists()

    data = tmp_path / "train.tsv"
    assert run(["data", "--n", "6", "--train-fraction", "0.5", "--out", str(data)]) == 0
    capsys.readouterr()

    assert run(["eval", "--checkpoint", str(run_dir / "model.ckpt"), "--dataset", str(data)]) == 0
    result = _json_out(capsys)
    assert result["model_kind"] == "dense" and result["n"] == 6
    assert result["auc"] == final["auc"]
    assert result["sigma_v"] == final["sigma_v"]
    assert result["sigma_t"] == final["sigma_t"]


def test_train_output_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["train", *TINY, "--out-dir", str(tmp_path / name)]) == 0
    for file in ("metrics.csv", "model.ckpt", "config.ini"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()


def test_train_from_config_file(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nmodel_kind = mlp\nn = 4\nd_e = 2\nd_h = 4\n\n[train]\nepochs = 1\n", encoding="utf-8")
    assert run(["train", "--config", str(ini), "--out-dir", str(tmp_path / "out")]) == 0
    final = _json_out(capsys)
    assert final["sigma_v"] is None
    model, manifest = load_checkpoint(tmp_path / "out" / "model.ckpt")
    assert manifest["model_kind"] == "mlp" and manifest["config"]["d_h"] == 4


def test_eval_uniform_model(tmp_path, capsys):
    ckpt = save_checkpoint(init_dense(4, 3, 2, 0.0, 0.0), tmp_path / "u.ckpt")
    assert run(["eval", "--checkpoint", str(ckpt), "--perplexity"]) == 0
    result = _json_out(capsys)
    assert result["sigma_v"] == pytest.approx(1 / 9, abs=1e-12)
    assert result["sigma_t"] is None
    assert result["auc"] == 0.5
    assert result["perplexity"] == pytest.approx(81.0, rel=1e-9)


def test_eval_rejects_other_n(tmp_path, capsys):
    ckpt = save_checkpoint(init_dense(4, 3, 2, 0.0, 0.0), tmp_path / "u.ckpt")
    assert run(["eval", "--checkpoint", str(ckpt), "--n", "5"]) == 1
    assert capsys.readouterr().err.startswith("error: usage: ")


def test_corrupted_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage\nmore garbage")
    assert run(["eval", "--checkpoint", str(bad)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: checkpoint: ")
    assert len(err.strip().splitlines()) == 1


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert run(["train", "--config", str(tmp_path / "none.ini"), "--out-dir", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error: usage: ")


def test_config_error_exit_code(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[model]\nwidth = 3\n", encoding="utf-8")
    assert run(["train", "--config", str(ini), "--out-dir", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: config: line 2: unknown key 'width'")


def test_bad_override(tmp_path, capsys):
    assert run(["train", "--set", "n=x", "--out-dir", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error: config: ")


def test_factorize_round_trip(tmp_path, capsys):
    dense = save_checkpoint(init_dense(5, 3, 4, 0.3, 0.3, make_rng(2)), tmp_path / "d.ckpt", seed=2)
    report = tmp_path / "report.json"
    out = tmp_path / "f.ckpt"
    args = ["factorize", "--checkpoint", str(dense), "--chi-h", "2", "--height", "2", "--chi-v", "4",
            "--sv-fill-lo", "0", "--sv-fill-hi", "0", "--out", str(out), "--report", str(report)]
    assert run(args) == 0
    assert _json_out(capsys)["max_round_trip_error"] < 1e-8

    payload = json.loads(report.read_text(encoding="utf-8"))
    assert len(payload["cores"]) == 5
    assert all(len(c["splits"]) == 1 for c in payload["cores"])
    model, manifest = load_checkpoint(out)
    assert manifest["model_kind"] == "factored" and manifest["seed"] == 2

    assert run(["eval", "--checkpoint", str(out)]) == 0
    assert 0.5 <= _json_out(capsys)["auc"] <= 1.0


def test_factorize_wrong_bond(tmp_path, capsys):
    dense = save_checkpoint(init_dense(4, 3, 3, 0.0, 0.0), tmp_path / "d.ckpt")
    args = ["factorize", "--checkpoint", str(dense), "--chi-h", "2", "--height", "2", "--chi-v", "2",
            "--out", str(tmp_path / "f.ckpt")]
    assert run(args) == 2
    assert capsys.readouterr().err.startswith("error: shape: ")


def test_sweep_from_grid(tmp_path, capsys):
    grid = tmp_path / "grid.ini"
    grid.write_text(
        "[base]\nn = 6\nchi = 3\nd_e = 2\nd_h = 4\nepochs = 1\ntrain_fraction = 0.5\n\n"
        "[grid]\nmodel_kind = dense, mlp\n",
        encoding="utf-8",
    )
    out = tmp_path / "sweep"
    assert run(["sweep", "--grid", str(grid), "--seeds", "0,1", "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader((out / "rows.csv").open(encoding="utf-8")))
    assert len(rows) == 4
    assert (out / "cells" / "model_kind-dense.csv").exists()
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["seeds"] == [0, 1]
    assert summary["cells"]["model_kind=mlp"]["runs"] == 2
    assert summary["cells"]["model_kind=dense"]["mean"]["sigma_v"] is not None


def test_sweep_drop_seeds(tmp_path, capsys):
    grid = tmp_path / "grid.ini"
    grid.write_text("[base]\nn = 4\nchi = 2\nepochs = 1\n\n[grid]\nalpha = 0, 0.5\n", encoding="utf-8")
    out = tmp_path / "sweep"
    assert run(["sweep", "--grid", str(grid), "--seeds", "0,1,2", "--drop-seeds", "1", "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["cells"]["alpha=0"]["seeds"] == [0, 2]
    assert summary["outliers"]["dropped"] == 2


def test_sweep_needs_grid_or_preset(tmp_path, capsys):
    assert run(["sweep", "--out-dir", str(tmp_path)]) == 1
    assert "exactly one of --grid or --preset" in capsys.readouterr().err


@pytest.mark.parametrize("flag", ["--chi-h", "--height", "--chi-v"])
def test_factorize_rejects_non_positive_dims(tmp_path, capsys, flag):
    dense = save_checkpoint(init_dense(4, 3, 3, 0.0, 0.0), tmp_path / "d.ckpt")
    dims = {"--chi-h": "3", "--height": "1", "--chi-v": "3"}
    dims[flag] = "0"
    args = ["factorize", "--checkpoint", str(dense), "--out", str(tmp_path / "f.ckpt")]
    for key, value in dims.items():
        args += [key, value]
    assert run(args) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: usage: ") and flag in err
    assert len(err.strip().splitlines()) == 1
    assert not (tmp_path / "f.ckpt").exists()


def test_mi_rejects_negative_length(tmp_path, capsys):
    assert run(["mi", "--n", "-1", "--out", str(tmp_path / "mi.csv")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: usage: ")
    assert len(err.strip().splitlines()) == 1


@pytest.mark.parametrize(
    "exc,kind",
    [(ValueError("n must be >= 0, got -1"), "value"), (np.linalg.LinAlgError("SVD did not converge"), "linalg")],
)
def test_library_errors_map_to_one_line(tmp_path, capsys, monkeypatch, exc, kind):
    def boom(n):
        raise exc

    monkeypatch.setattr(cli_mod, "mutual_information", boom)
    assert run(["mi", "--n", "3", "--out", str(tmp_path / "mi.csv")]) == 2
    err = capsys.readouterr().err
    assert err == f"error: {kind}: {exc}\n"
