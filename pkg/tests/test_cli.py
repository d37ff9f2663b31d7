import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from resetmt.cli import main
from resetmt.tsv import read_input

FAST = ["--reps", "1", "--rf-trees", "30", "--nn-maxiter", "50"]


def run(*argv):
    return main([str(a) for a in argv])


def read_tsv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def geometric(tmp_path_factory):
    out = tmp_path_factory.mktemp("geo")
    assert run("simulate", "--sim", "geometric", "--seed", 1, "--out", out) == 0
    return out


def test_simulate_round_trip_into_reset(geometric, tmp_path):
    data = read_input(geometric / "data.tsv")
    assert data.kind == "pvalue" and data.table.n == 2500 and data.side_names == ("x_1", "x_2")
    truth = read_tsv(geometric / "truth.tsv")
    assert len(truth) == 2500 and {"id", "false_null"} <= set(truth[0])
    assert run("reset", geometric / "data.tsv", "--out", tmp_path, *FAST) == 0
    rows = read_tsv(tmp_path / "discoveries.tsv")
    assert len(rows) == 2500
    assert [r["id"] for r in rows] == list(data.ids)
    assert {"id", "score", "rescored", "discovered"} <= set(rows[0])


def test_asymmetric_regions_resolve_c0(geometric, tmp_path):
    args = ["reset", geometric / "data.tsv", "--a", 0.3, "--b1", 0.3, "--b2", 0.9, "--out", tmp_path, *FAST]
    assert run(*args) == 0
    record = json.loads((tmp_path / "run.json").read_text())
    assert record["config"]["c0"] == pytest.approx(1 / 3)
    assert record["config"]["c"] == pytest.approx(0.5)
    assert record["counts"]["discoveries"] == sum(r["discovered"] == "1" for r in read_tsv(tmp_path / "discoveries.tsv"))
    assert record["ensemble"]["selected_models"] and record["ensemble"]["side_info_used"][0] == "W"


def test_fdp_without_gamma_is_usage_error(geometric, tmp_path, capsys):
    assert run("reset", geometric / "data.tsv", "--mode", "fdp", "--out", tmp_path) == 1
    assert "gamma" in capsys.readouterr().err


def test_identical_runs_are_byte_identical_and_replayable(geometric, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = [geometric / "data.tsv", "--seed", 5, "--mode", "fdp", "--gamma", 0.1, *FAST]
    assert run("reset", *args, "--out", a) == 0
    assert run("reset", *args, "--out", b) == 0
    assert (a / "discoveries.tsv").read_bytes() == (b / "discoveries.tsv").read_bytes()
    # replay: only the input and the earlier run.json
    assert run("reset", geometric / "data.tsv", "--config", a / "run.json", "--out", c) == 0
    assert (a / "discoveries.tsv").read_bytes() == (c / "discoveries.tsv").read_bytes()
    ra, rc = (json.loads((d / "run.json").read_text()) for d in (a, c))
    ra.pop("timing"), rc.pop("timing")
    assert ra == rc


def test_seed_changes_rescoring(geometric, tmp_path):
    for seed in (1, 2):
        assert run("reset", geometric / "data.tsv", "--seed", seed, "--out", tmp_path / str(seed), *FAST) == 0
    r1 = read_tsv(tmp_path / "1" / "discoveries.tsv")
    r2 = read_tsv(tmp_path / "2" / "discoveries.tsv")
    assert [r["rescored"] for r in r1] != [r["rescored"] for r in r2]


def test_filter_seqstep_plus_worked_example(tmp_path):
    f = write(tmp_path / "in.tsv", "label\tscore\n1\t5\n1\t4\n-1\t3\n1\t2\n-1\t1\n")
    assert run("filter", f, "--method", "seqstep+", "--alpha", 0.5, "--out", tmp_path) == 0
    assert sum(r["discovered"] == "1" for r in read_tsv(tmp_path / "discoveries.tsv")) == 2
    assert run("filter", f, "--method", "seqstep", "--alpha", 0.5, "--out", tmp_path) == 0
    assert sum(r["discovered"] == "1" for r in read_tsv(tmp_path / "discoveries.tsv")) == 3


def test_filter_pvalue_methods(tmp_path):
    f = write(tmp_path / "one.tsv", "pvalue\n0.05\n")
    assert run("filter", f, "--method", "grsd", "--alpha", 0.1, "--gamma", 0.1, "--out", tmp_path) == 0
    assert read_tsv(tmp_path / "discoveries.tsv")[0]["discovered"] == "1"
    f = write(tmp_path / "many.tsv", "id\tpvalue\n" + "".join(f"h{i}\t{p}\n" for i, p in enumerate([0.2, 0.9, 1.0, 0.5])))
    assert run("filter", f, "--method", "bh", "--alpha", 1, "--out", tmp_path) == 0
    rows = read_tsv(tmp_path / "discoveries.tsv")
    assert [r["id"] for r in rows] == ["h0", "h1", "h2", "h3"] and all(r["discovered"] == "1" for r in rows)
    assert run("filter", f, "--method", "seqstep", "--alpha", 1, "--out", tmp_path) == 1
    assert run("filter", f, "--method", "fdpsd", "--out", tmp_path) == 1


def test_simulate_betamix_layout(tmp_path):
    assert run("simulate", "--sim", "betamix", "--out", tmp_path) == 0
    with open(tmp_path / "data.tsv") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        n_rows = sum(1 for _ in fh)
    assert n_rows == 2000
    assert sum(h.startswith("x_") for h in header) == 100


def test_simulate_competition_layout(tmp_path):
    assert run("simulate", "--sim", "competition", "--m", 300, "--false-null-fraction", 0.2, "--out", tmp_path) == 0
    data = read_input(tmp_path / "data.tsv")
    assert data.kind == "competition" and data.table.n == 300


def test_validate_usage_errors(tmp_path):
    assert run("validate", "--sim", "competition", "--method", "seqstep+", "--runs", 0, "--out", tmp_path) == 1
    assert run("simulate", "--sim", "geometric", "--scenario", "square", "--out", tmp_path) == 1
    assert run("validate", "--sim", "competition", "--method", "bh", "--runs", 5, "--out", tmp_path) == 1


def test_validate_report(tmp_path):
    argv = ["validate", "--sim", "competition", "--method", "seqstep+", "--alpha", 0.1, 0.2, "--runs", 50, "--out", tmp_path]
    assert run(*argv) == 0
    rows = read_tsv_csv(tmp_path / "report.csv")
    assert [float(r["alpha"]) for r in rows] == [0.1, 0.2]
    for r in rows:
        assert {"empirical_fdr", "fdr_se", "power", "power_se", "p_fdp_exceed"} <= set(r)
        assert 0 <= float(r["empirical_fdr"]) <= 1


def read_tsv_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize(
    "text, line",
    [
        ("label\tscore\n1\t2.0\n0\t1.0\n", 3),
        ("label\tscore\n1\tabc\n", 2),
        ("pvalue\n0.2\n1.5\n", 3),
        ("pvalue\tlabel\tscore\n0.1\t1\t2\n", None),
        ("pvalue\tfoo\n0.1\t2\n", None),
        ("label\tscore\tx_1\n1\t2.0\t\n", 2),
        ("id\tpvalue\na\t0.1\na\t0.2\n", 3),
    ],
)
def test_data_errors_exit_2_with_line_numbers(tmp_path, capsys, text, line):
    f = write(tmp_path / "bad.tsv", text)
    assert run("filter", f, "--method", "seqstep", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "data error" in err
    if line is not None:
        assert f"line {line}" in err


def test_missing_file_is_data_error(tmp_path):
    assert run("filter", tmp_path / "nope.tsv", "--method", "bh", "--out", tmp_path) == 2


def test_zero_pvalue_and_scientific_notation(tmp_path):
    f = write(tmp_path / "in.tsv", "pvalue\tx_1\n0\t1\n1e-8\t2\n0.7\t3\n0.95\t4\n")
    assert run("filter", f, "--method", "seqstep", "--alpha", 0.5, "--out", tmp_path) == 0
    rows = read_tsv(tmp_path / "discoveries.tsv")
    assert np.isfinite(float(rows[0]["rescored"]))


def test_console_script(tmp_path):
    exe = shutil.which("resetmt")
    if exe is None:
        pytest.skip("package not installed as a console script")
    f = write(tmp_path / "in.tsv", "label\tscore\n1\t5\n1\t4\n-1\t3\n1\t2\n-1\t1\n")
    proc = subprocess.run([exe, "filter", str(f), "--method", "seqstep+", "--alpha", "0.5", "--out", str(tmp_path)], capture_output=True)
    assert proc.returncode == 0
    proc = subprocess.run([exe, "reset"], capture_output=True)
    assert proc.returncode == 1
