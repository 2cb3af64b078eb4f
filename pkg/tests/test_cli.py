import json
import subprocess
import sys

import numpy as np
import pytest

from mixdisc.cli import main
from mixdisc.data import Dataset, write_csv
from mixdisc.simulation import ExperimentSpec, generate_dataset

DATA = ["--p", "5", "--d", "3", "--q", "2"]


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def sample_files(tmp_path):
    train, test = generate_dataset(ExperimentSpec(n_train=(60, 60), seed=3), 0)
    write_csv(train, tmp_path / "train.csv")
    write_csv(test, tmp_path / "test.csv")
    return tmp_path / "train.csv", tmp_path / "test.csv"


def test_select_prints_subset(sample_files, capsys, tmp_path):
    report = tmp_path / "sel.json"
    dump = tmp_path / "est.json"
    code, out, _ = run(
        ["select", "--input", sample_files[0], *DATA, "--alpha", "0.25", "--beta", "0.5", "--penalty", "h7",
         "--output", report, "--dump-estimates", dump],
        capsys,
    )
    assert code == 0
    assert out.startswith("selected: ")
    chosen = {int(v) for v in out.split(":")[1].split()}
    assert chosen and chosen <= {1, 2, 3, 4, 5}
    doc = json.loads(report.read_text())
    assert set(doc["selected"]) == chosen
    est = json.loads(dump.read_text())
    assert est


def test_alpha_out_of_range(sample_files, capsys):
    code, out, err = run(["select", "--input", sample_files[0], *DATA, "--alpha", "0.7"], capsys)
    assert code == 2
    assert err.startswith("mixdisc: error[usage]:") and "]0, 1/2[" in err
    assert len(err.strip().splitlines()) == 1 and out == ""


def test_smoothed_select_where_empirical_fails(tmp_path, capsys):
    rng = np.random.default_rng(4)
    n = 60
    Y = rng.integers(0, 2, size=(n, 2))
    Y[:3] = [1, 1]
    Y[3:][(Y[3:] == [1, 1]).all(axis=1)] = [0, 0]
    write_csv(Dataset(rng.normal(size=(n, 4)), Y, np.tile([1, 2], n // 2)), tmp_path / "thin.csv")
    flags = ["select", "--input", tmp_path / "thin.csv", "--p", "4", "--d", "2", "--q", "2"]
    code, _, err = run(flags, capsys)
    assert code == 4 and err.startswith("mixdisc: error[numerical]:") and "cell" in err
    code, out, _ = run(flags + ["--estimator", "smoothed", "--lambda", "0.3"], capsys)
    assert code == 0 and out.startswith("selected: ")


def test_estimator_lambda_pairing(sample_files, capsys):
    base = ["select", "--input", sample_files[0], *DATA]
    assert run(base + ["--estimator", "smoothed"], capsys)[0] == 2
    assert run(base + ["--lambda", "0.3"], capsys)[0] == 2
    assert run(base + ["--estimator", "smoothed", "--lambda", "1.0"], capsys)[0] == 2


def test_classify(sample_files, capsys, tmp_path):
    pred = tmp_path / "pred.csv"
    code, out, _ = run(
        ["classify", "--train", sample_files[0], "--test", sample_files[1], *DATA, "--variables", "3,5", "--output", pred],
        capsys,
    )
    assert code == 0
    assert out.startswith("variables: 3 5") and "cc: " in out
    lines = pred.read_text().splitlines()
    assert lines[0] == "row,z,predicted" and len(lines) == 121
    rows = [tuple(map(int, l.split(","))) for l in lines[1:]]
    cc = float(out.split("cc: ")[1].split()[0])
    assert cc == pytest.approx(np.mean([z == g for _, z, g in rows]), abs=1e-5)


def test_classify_rejects_bad_variables(sample_files, capsys):
    code, _, err = run(["classify", "--train", sample_files[0], "--test", sample_files[1], *DATA, "--variables", "0,6"], capsys)
    assert code == 2 and "1..5" in err


def test_tune(sample_files, capsys, tmp_path):
    table = tmp_path / "cv.csv"
    code, out, _ = run(
        ["tune", "--input", sample_files[0], *DATA, "--grid-alpha", "0.1,0.3", "--grid-beta", "0.2,0.8",
         "--seed", "1", "--output", table],
        capsys,
    )
    assert code == 0 and out.startswith("best alpha: ")
    lines = table.read_text().splitlines()
    assert lines[0] == "alpha,beta,cv,failures" and len(lines) == 5


def test_tune_lambda_grid(sample_files, capsys):
    code, out, _ = run(
        ["tune", "--input", sample_files[0], *DATA, "--grid-alpha", "0.25", "--grid-beta", "0.5",
         "--grid-lambda", "0,0.3", "--seed", "1"],
        capsys,
    )
    assert code == 0 and "lambda: " in out


def test_seed_is_mandatory(sample_files, capsys):
    code, _, err = run(["tune", "--input", sample_files[0], *DATA], capsys)
    assert code == 2 and "--seed" in err
    code, _, err = run(["simulate", "--scenario", "paper-table2", "--reps", "1"], capsys)
    assert code == 2 and "--seed" in err


def test_simulate_table2_rows(capsys, tmp_path):
    out_csv, summary = tmp_path / "t2.csv", tmp_path / "t2.txt"
    code, _, _ = run(
        ["simulate", "--scenario", "paper-table2", "--reps", "2", "--seed", "1", "--output", out_csv,
         "--summary", summary, "--threads", "1"],
        capsys,
    )
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["100", "200", "300", "400", "500"]
    assert "cc_ordering_in_n: " in summary.read_text()


def test_simulate_single_rep(capsys):
    code, out, _ = run(["simulate", "--scenario", "paper-fig1", "--reps", "1", "--n", "100", "--seed", "2", "--threads", "1"], capsys)
    assert code == 0
    header, *rows = out.splitlines()
    cc = header.split(",").index("cc")
    assert rows and all(0 <= float(r.split(",")[cc]) <= 1 for r in rows)


def test_simulate_same_seed_same_bytes(capsys, tmp_path):
    argv = ["simulate", "--scenario", "paper-table1", "--reps", "2", "--n", "100", "--seed", "5", "--threads", "1", "--output"]
    run(argv + [tmp_path / "a.csv"], capsys)
    run(argv + [tmp_path / "b.csv"], capsys)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_rejects_bad_sizes(capsys):
    code, _, err = run(["simulate", "--scenario", "paper-table1", "--n", "101", "--seed", "1"], capsys)
    assert code == 2 and "multiple" in err


def test_unknown_scenario_lists_names(capsys):
    code, _, err = run(["simulate", "--scenario", "nope", "--seed", "1"], capsys)
    assert code == 2
    for name in ("paper-table1", "paper-table2", "paper-fig1"):
        assert name in err


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = run(["select", "--input", tmp_path / "absent.csv", *DATA], capsys)
    assert code == 5 and err.startswith("mixdisc: error[io]:")


def test_bad_data_is_data_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,x3,x4,x5,y1,y2,y3,z\n0,0,0,0,0,0,2,0,1\n")
    code, _, err = run(["select", "--input", path, *DATA], capsys)
    assert code == 3 and err.startswith("mixdisc: error[data]:") and "row" in err


def test_unwritable_output_is_io_error(sample_files, capsys, tmp_path):
    code, _, err = run(["select", "--input", sample_files[0], *DATA, "--output", tmp_path / "no" / "dir.json"], capsys)
    assert code == 5


@pytest.mark.parametrize("command", ["select", "classify", "tune", "simulate"])
def test_help_lists_flags(command, capsys):
    code, out, _ = run([command, "--help"], capsys)
    assert code == 0
    for flag in {"select": ["--alpha", "--beta", "--penalty", "--lambda"], "classify": ["--train", "--test"],
                 "tune": ["--grid-alpha", "--grid-beta", "--grid-lambda", "--seed"],
                 "simulate": ["--scenario", "--reps", "--threads", "--seed"]}[command]:
        assert flag in out


def test_console_entry_point(sample_files):
    proc = subprocess.run(
        [sys.executable, "-m", "mixdisc.cli", "select", "--input", str(sample_files[0]), *DATA],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("selected: ")
