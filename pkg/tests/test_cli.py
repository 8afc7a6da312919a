import json

import numpy as np
import pandas as pd
import pytest

from conftest import toy_dataset
from risksvm.cli import main
from risksvm.qp_model import LossSpec, build, load_triplets
from risksvm.data import ingest
from risksvm.evaluation import Standardizer


@pytest.fixture
def csv_path(tmp_path):
    data = toy_dataset(np.random.default_rng(3), 16, 14, 3, sep=0.8)
    frame = pd.DataFrame(data.features, columns=["a", "b", "c"])
    frame["target"] = np.where(data.labels == 1, "yes", "no")
    path = tmp_path / "toy.csv"
    frame.to_csv(path, index=False)
    return path


def common(path):
    return ["--data", str(path), "--label-column", "target", "--positive-label", "yes"]


def test_train_writes_model(csv_path, tmp_path):
    out = tmp_path / "model.json"
    assert main(["train", *common(csv_path), "--loss", "one_cvar", "--lam", "0.5",
                 "--alpha2", "0.7", "--out", str(out)]) == 0
    model = json.loads(out.read_text())
    assert model["loss"]["name"] == "one_cvar" and model["status"] == "optimal"
    assert len(model["classifier"]["v"]) == 3


def test_evaluate_report(csv_path, tmp_path, capsys):
    out = tmp_path / "eval"
    code = main(["evaluate", *common(csv_path), "--loss", "risk_cvar", "--lam", "0.5", "--alpha2", "0.7",
                 "--beta2", "0.5", "--k", "3", "--n-boot", "50", "--out-dir", str(out)])
    assert code == 0
    assert "f1=" in capsys.readouterr().out
    for name in ("metrics.csv", "risk_table.csv", "roc_points.csv", "error_distribution.csv",
                 "implied_measure.csv", "manifest.json", "results.json"):
        assert (out / name).exists()


def test_config_file_overridden_by_flags(csv_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": str(csv_path), "label_column": "target", "positive_label": "yes",
                               "loss": "two_risk", "lam": 0.3, "k": 3}))
    out = tmp_path / "m.json"
    assert main(["train", "--config", str(cfg), "--lam", "0.6", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["loss"]["lam"] == 0.6


def test_sweep_and_report(csv_path, tmp_path):
    out = tmp_path / "sw"
    grid = json.dumps({"lam": [0.4, 0.6], "alpha2": [0.6, 0.8]})
    assert main(["sweep", *common(csv_path), "--loss", "one_cvar", "--grid", grid, "--k", "3",
                 "--n-boot", "50", "--out-dir", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[0].startswith("loss,lam")
    again = tmp_path / "again"
    assert main(["report", "--results", str(out / "results.json"), "--out-dir", str(again),
                 "--n-boot", "50"]) == 0
    for name in ("metrics.csv", "roc_points.csv", "risk_table.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_export_qp(csv_path, tmp_path):
    out = tmp_path / "qp.txt"
    args = ["export-qp", *common(csv_path), "--loss", "two_cvar", "--lam", "0.5", "--alpha1", "0.6",
            "--alpha2", "0.7", "--beta1", "0.3", "--beta2", "0.4", "--standardize", "--out", str(out)]
    assert main(args) == 0
    data = ingest(csv_path, "target", "yes")
    data = type(data)(Standardizer.fit(data.features).transform(data.features), data.labels)
    expected = build(LossSpec("two_cvar", lam=0.5, alpha1=0.6, alpha2=0.7, beta1=0.3, beta2=0.4), data)
    P, q, A, l, u = load_triplets(out)
    assert np.allclose(P.toarray(), expected.P.toarray())
    assert np.allclose(A.toarray(), expected.A.toarray())
    assert np.array_equal(q, expected.q) and np.array_equal(l, expected.l) and np.array_equal(u, expected.u)


@pytest.mark.parametrize("argv", [
    ["train", "--loss", "bogus"],
    ["train", "--data", "x.csv", "--label-column", "y", "--positive-label", "1"],
    ["train", "--loss", "one_cvar", "--lam", "2"],
    ["sweep", "--loss", "one_cvar", "--grid", "{not json"],
    ["frobnicate"],
])
def test_usage_errors(argv, csv_path):
    if argv[0] == "train" and "--data" not in argv:
        argv = argv + common(csv_path)
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == 1


def test_data_errors(tmp_path, csv_path):
    assert main(["train", "--data", str(tmp_path / "none.csv"), "--label-column", "t",
                 "--positive-label", "1", "--loss", "exp_val"]) == 2
    assert main(["train", "--data", str(csv_path), "--label-column", "missing",
                 "--positive-label", "1", "--loss", "exp_val"]) == 2
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert main(["report", "--results", str(empty), "--out-dir", str(tmp_path / "r")]) == 2
    assert sorted(p.name for p in (tmp_path / "r").iterdir()) == ["manifest.json"]


def test_solver_failure_exit(csv_path, tmp_path, monkeypatch):
    from risksvm import experiment

    def broken(*a, **kw):
        raise RuntimeError("no")

    monkeypatch.setattr(experiment, "kfold_cross_validate", broken)
    code = main(["sweep", *common(csv_path), "--loss", "exp_val", "--k", "3",
                 "--out-dir", str(tmp_path / "s")])
    assert code == 3
    assert "RuntimeError" in (tmp_path / "s" / "sweep.csv").read_text()
