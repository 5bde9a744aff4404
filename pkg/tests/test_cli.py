import io
import os
import subprocess
import sys

import pytest

from robust_bisim import cli
from robust_bisim.lmc import parse_model


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def model_files(tmp_path):
    def make(family, eps):
        prefix = tmp_path / f"{family}-{eps.replace('/', '_')}"
        code, _, _ = run("export", "--family", family, "--eps", eps, "--out", str(prefix))
        assert code == 0
        return ["--tra", f"{prefix}.tra", "--lab", f"{prefix}.lab"]

    return make


def test_minimize_bisim_fig1a(model_files):
    code, out, _ = run("minimize", *model_files("geometric-coin", "0"), "--mode", "bisim")
    assert code == 0
    assert out == "blocks: 2\nblock 0: 0 2\nblock 1: 1\n"


def test_minimize_robust_fig1a(model_files):
    code, out, _ = run("minimize", *model_files("geometric-coin", "0"), "--mode", "robust")
    assert code == 0
    assert out.splitlines()[:2] == ["blocks: 2", "non-robust pairs: 0"]


def test_minimize_robust_fig1b(model_files):
    files = model_files("rigged-coin", "0")
    assert run("minimize", *files)[1].startswith("blocks: 2\n")
    code, out, _ = run("minimize", *files, "--mode", "robust")
    assert code == 0
    assert out.splitlines()[:2] == ["blocks: 3", "non-robust pairs: 2"]


def test_minimize_writes_quotient(tmp_path):
    prefix = tmp_path / "q"
    code, _, _ = run("minimize", "--family", "random-walk", "--eps", "0", "--out", str(prefix))
    assert code == 0
    q = parse_model((tmp_path / "q.tra").read_text(), (tmp_path / "q.lab").read_text())
    assert q.n == 2


def test_distance_row():
    code, out, _ = run("distance", "--family", "geometric-coin", "--eps", "1/8")
    assert code == 0
    assert "h0,h1,0.200000000" in out.splitlines()


def test_distance_pairs_filter():
    code, out, _ = run("distance", "--family", "geometric-coin", "--eps", "1/8", "--pairs", "h0:h0,h0:t")
    assert code == 0
    assert out == "s,t,value\nh0,h0,0.000000000\nh0,t,1.000000000\n"


def test_distance_file_model_uses_ids(model_files):
    code, out, _ = run("distance", *model_files("geometric-coin", "1/4"), "--pairs", "0:2")
    assert out == "s,t,value\n0,2,0.333333333\n"


def test_distance_matrix_and_policy(tmp_path):
    pol = tmp_path / "policy.txt"
    code, out, _ = run(
        "distance", "--family", "geometric-coin", "--eps", "1/8",
        "--format", "matrix", "--policy", str(pol), "--pairs", "h0:h1",
    )
    assert code == 0
    assert out.splitlines()[0].split() == ["h0", "t", "h1"]
    assert pol.read_text() == "pair (h0,h1)\n  (h0,t): 1/8\n  (h0,h1): 3/8\n  (t,t): 1/2\n"


def test_sweep_command(tmp_path):
    dest = tmp_path / "sweep.csv"
    code, _, _ = run("sweep", "--family", "geometric-coin", "--eps", "0,1/8,1/4,1/2", "--out", str(dest))
    assert code == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "family,epsilon,s,t,distance,robust,bisimilar"
    assert [line.split(",")[4] for line in lines[1:]] == ["0.000000000", "0.200000000", "0.333333333", "0.500000000"]


def test_sweep_all_families_default_grid():
    code, out, _ = run("sweep", "--threads", "2")
    assert code == 0
    assert len(out.splitlines()) == 1 + 3 * 8


def test_sweep_empty_grid():
    assert run("sweep", "--family", "rigged-coin", "--eps", "") == (0, "", "")


def test_export_stdout():
    code, out, _ = run("export", "--family", "rigged-coin", "--eps", "1/4")
    assert code == 0
    assert out.startswith("STATES 3\n")
    assert "2 1 1/4" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["minimize"],
        ["minimize", "--family", "rigged-coin", "--eps", "2"],
        ["minimize", "--family", "rigged-coin", "--eps", "3/4"],
        ["minimize", "--tra", "/nonexistent.tra", "--lab", "/nonexistent.lab"],
        ["distance", "--family", "geometric-coin", "--pairs", "h0-h1"],
        ["distance", "--family", "geometric-coin", "--pairs", "h0:zz"],
        ["distance", "--family", "geometric-coin", "--tol", "0"],
        ["sweep", "--eps", "1/8,abc"],
        ["distance", "--family", "geometric-coin", "--threads", "0"],
    ],
)
def test_input_errors_exit_1(argv):
    code, out, err = run(*argv)
    assert code == 1
    assert err.startswith("error:")


def test_bad_model_file_exit_1(tmp_path):
    (tmp_path / "m.tra").write_text("STATES 2\n0 0 1/2\n1 1 1\n")
    (tmp_path / "m.lab").write_text("0 a\n1 b\n")
    code, _, err = run("minimize", "--tra", str(tmp_path / "m.tra"), "--lab", str(tmp_path / "m.lab"))
    assert code == 1
    assert "state 0 sums to 1/2" in err


def test_single_label_flag(tmp_path):
    (tmp_path / "m.tra").write_text("STATES 2\n0 1 1\n1 0 1\n")
    (tmp_path / "m.lab").write_text("0 a\n1 a\n")
    files = ["--tra", str(tmp_path / "m.tra"), "--lab", str(tmp_path / "m.lab")]
    assert run("minimize", *files)[0] == 1
    code, out, _ = run("minimize", *files, "--allow-single-label")
    assert code == 0 and out.startswith("blocks: 1\n")


def test_nonconvergence_exit_2():
    code, _, err = run("distance", "--family", "geometric-coin", "--eps", "1/1024", "--max-iter", "2")
    assert code == 2
    assert "residual" in err


def test_internal_error_exit_3(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("broken invariant")

    monkeypatch.setattr(cli, "delta", boom)
    code, _, err = run("distance", "--family", "geometric-coin")
    assert code == 3
    assert "internal error" in err


def test_deterministic_output():
    argv = ["distance", "--family", "random-walk", "--eps", "1/64", "--format", "matrix"]
    assert run(*argv) == run(*argv)


@pytest.mark.parametrize("argv", [["sweep"], ["minimize", "--family", "random-walk", "--mode", "robust"]])
def test_numba_and_numpy_paths_match(argv):
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, ROBUST_BISIM_NUMBA=flag)
        res = subprocess.run(
            [sys.executable, "-m", "robust_bisim", *argv], env=env, capture_output=True, check=True
        )
        outs.append(res.stdout)
    assert outs[0] == outs[1]
    assert outs[0]
