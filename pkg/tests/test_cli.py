import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from akda import cli
from akda.data import gen_circles, load_csv, split, write_csv


def run(argv, capsys):
    """Call the CLI in-process; returns (exit code, stdout, stderr)."""
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def circles_csv(tmp_path, capsys):
    path = tmp_path / "c.csv"
    assert run(["synth", "circles", "--n", 200, "--noise", 0.1, "--seed", 7, "--out", path], capsys)[0] == 0
    return path


def test_synth_circles(circles_csv, tmp_path, capsys):
    rows = circles_csv.read_text().splitlines()
    assert rows[0] == "x0,x1,label"
    assert len(rows) == 201
    again = tmp_path / "again.csv"
    run(["synth", "circles", "--n", 200, "--noise", 0.1, "--seed", 7, "--out", again], capsys)
    assert again.read_bytes() == circles_csv.read_bytes()


@pytest.mark.parametrize("kind", ["gaussians", "xor"])
def test_synth_reproducible(tmp_path, capsys, kind):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(["synth", kind, "--seed", 3, "--out", p], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "gaussians", "--classes", 1],
        ["synth", "circles", "--n", 4],
        ["synth", "moons"],
        ["selfcheck", "--sizes", "10,big"],
        ["bench", "--n-grid", "500,200"],
        ["eval", "x.csv", "--kernel", "rbf", "--gamma", 1, "--test-fraction", 1.5],
    ],
)
def test_usage_errors_exit_2(capsys, argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "x.csv").write_text("1,2,0\n3,4,1\n5,6,0\n7,8,1\n")
    code, _, err = run(argv, capsys)
    assert code == 2
    assert "error" in err


def test_fit_logs_rank_condition(circles_csv, tmp_path, capsys):
    out = tmp_path / "m.bin"
    code, stdout, err = run(
        ["fit", circles_csv, "--kernel", "rbf", "--gamma", 0.5, "--solver", "sr", "--variant", "kuda", "--out", out],
        capsys,
    )
    assert code == 0 and out.exists()
    record = json.loads(stdout)
    assert "rank_condition" in record
    assert record["variant"] == "KUDA" and record["solver"] == "spectral_regression"
    for key in ("rank_t", "rank_w", "rank_b", "residual", "timings"):
        assert key in record
    assert "rank_condition" in err


def test_fit_log_file_and_oracle(circles_csv, tmp_path, capsys):
    log = tmp_path / "fit.jsonl"
    for solver in ("oracle", "gsvd"):
        code, stdout, _ = run(
            ["fit", circles_csv, "--kernel", "rbf", "--gamma", 0.5, "--solver", solver,
             "--out", tmp_path / "m.bin", "--log", log],
            capsys,
        )
        assert code == 0 and stdout == ""
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert [l["solver"] for l in lines] == ["oracle", "gsvd_cod"]


def test_fit_missing_gamma(circles_csv, tmp_path, capsys):
    code, _, err = run(["fit", circles_csv, "--kernel", "rbf", "--out", tmp_path / "m.bin"], capsys)
    assert code == 2 and "--gamma" in err


def test_fit_solver_error_exit_4(circles_csv, tmp_path, capsys):
    code, _, err = run(
        ["fit", circles_csv, "--kernel", "rbf", "--gamma", 0.5, "--epsilon", 0, "--out", tmp_path / "m.bin"],
        capsys,
    )
    assert code == 4 and "epsilon" in err


def test_data_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,0\n3,4\n")
    code, _, err = run(["fit", bad, "--kernel", "linear", "--out", tmp_path / "m.bin"], capsys)
    assert code == 3 and "line 2" in err
    code, _, _ = run(["fit", tmp_path / "missing.csv", "--kernel", "linear", "--out", tmp_path / "m.bin"], capsys)
    assert code == 3
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a model")
    code, _, _ = run(["transform", junk, bad], capsys)
    assert code == 3


def test_transform_shapes_and_mismatch(circles_csv, tmp_path, capsys):
    m = tmp_path / "m.bin"
    run(["fit", circles_csv, "--kernel", "rbf", "--gamma", 0.5, "--out", m], capsys)
    z = tmp_path / "z.csv"
    assert run(["transform", m, circles_csv, "--out", z], capsys)[0] == 0
    rows = list(csv.reader(z.open()))
    assert rows[0] == ["z0", "label"] and len(rows) == 201

    wide = tmp_path / "wide.csv"
    wide.write_text("1,2,3,0\n4,5,6,1\n")
    code, _, err = run(["transform", m, wide], capsys)
    assert code == 3 and "expects 2 features" in err

    nolab = tmp_path / "nolab.csv"
    nolab.write_text("x0,x1\n0.5,0.5\n3,0\n")
    code, out, _ = run(["transform", m, nolab, "--no-labels"], capsys)
    assert code == 0 and out.splitlines()[0] == "z0" and len(out.splitlines()) == 3


def test_eval_circles_and_determinism(circles_csv, capsys):
    base = ["eval", circles_csv, "--solver", "sr", "--seed", 7]
    code, out1, _ = run(base + ["--kernel", "rbf", "--gamma", 0.5], capsys)
    _, out2, _ = run(base + ["--kernel", "rbf", "--gamma", 0.5], capsys)
    assert code == 0 and out1 == out2
    assert json.loads(out1)["metrics"]["accuracy"] >= 0.95
    _, out, _ = run(base + ["--kernel", "linear"], capsys)
    assert json.loads(out)["metrics"]["accuracy"] <= 0.6


def test_eval_gamma_grid_and_ridge(circles_csv, capsys):
    code, out, _ = run(
        ["eval", circles_csv, "--kernel", "rbf", "--gamma-grid", "0.01,0.5,2", "--classifier", "ridge", "--seed", 1],
        capsys,
    )
    report = json.loads(out)
    assert code == 0 and set(report["gamma_grid"]) == {"0.01", "0.5", "2.0"}
    assert report["metrics"]["accuracy"] >= 0.95


def test_transform_pipe_reproduces_eval(tmp_path, capsys):
    data = gen_circles(160, 0.1, 9)
    train, test = split(data, 0.5, 9)
    paths = {name: tmp_path / f"{name}.csv" for name in ("train", "test")}
    write_csv(train, paths["train"])
    write_csv(test, paths["test"])
    flags = ["--kernel", "rbf", "--gamma", 0.5, "--solver", "gsvd", "--variant", "okda"]

    _, direct, _ = run(["eval", paths["train"], "--test-data", paths["test"], *flags], capsys)

    m = tmp_path / "m.bin"
    run(["fit", paths["train"], *flags, "--out", m], capsys)
    for name in ("train", "test"):
        run(["transform", m, paths[name], "--out", tmp_path / f"z_{name}.csv"], capsys)
    _, piped, _ = run(["eval", tmp_path / "z_train.csv", "--test-data", tmp_path / "z_test.csv", "--no-da"], capsys)
    assert json.loads(piped)["metrics"] == json.loads(direct)["metrics"]


def test_selfcheck(capsys):
    code, out, _ = run(["selfcheck", "--sizes", "10,20", "--seed", 2], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 12
    assert all(l.startswith(("PASS", "expected-error")) for l in lines)
    assert sum(l.startswith("expected-error") for l in lines) == 2


def test_bench_shape_contract(tmp_path, capsys):
    out = tmp_path / "b.csv"
    code, _, _ = run(
        ["bench", "--n-grid", "40,60,80", "--classes", 4, "--dim", 5, "--solvers", "sr,gsvd",
         "--repeats", 1, "--out", out],
        capsys,
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "solver,n,c,kernel,wall_time_s,residual,trace_criterion,rank_condition,accuracy"
    rows = list(csv.DictReader(lines))
    assert len(rows) == 6
    assert {(r["solver"], r["n"]) for r in rows} == {
        (s, str(n)) for s in ("spectral_regression", "gsvd_cod") for n in (40, 60, 80)
    }


def test_bench_records_cell_errors(tmp_path, capsys):
    out = tmp_path / "b.csv"
    code, _, _ = run(
        ["bench", "--n-grid", "40", "--classes", 4, "--dim", 5, "--solvers", "sr,cholqr",
         "--epsilon", 0, "--repeats", 1, "--out", out],
        capsys,
    )
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2
    assert all(r["wall_time_s"].startswith("error:") for r in rows)


def test_bench_deterministic_columns(tmp_path, capsys):
    cols = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.csv"
        run(["bench", "--n-grid", "40", "--classes", 4, "--dim", 5, "--repeats", 1, "--seed", 5, "--out", out], capsys)
        cols.append([(r["trace_criterion"], r["accuracy"], r["rank_condition"]) for r in csv.DictReader(out.open())])
    assert cols[0] == cols[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "akda", "synth", "xor", "--n", "16", "--out", str(tmp_path / "x.csv")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert load_csv(tmp_path / "x.csv").n_samples == 16
    proc = subprocess.run([sys.executable, "-m", "akda", "fit"], capture_output=True, text=True)
    assert proc.returncode == 2
