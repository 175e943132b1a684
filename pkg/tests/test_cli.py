import csv
import io
import math

import pytest

from opsketch import cli
from opsketch.kernels import Kernel


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_header_echoes_config(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--k-min", "2", "--k-max", "4", "--k-step", "1", "--seed", "7", "--trials", "3")
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("# opsketch command=bounds")
    for item in ("seed=7", "trials=3", "eps=1e-13", "kernel=airy", "p=5"):
        assert item in first
    rows = parse(out)
    assert [int(r["k"]) for r in rows] == [2, 3, 4]


@pytest.mark.parametrize("argv", [
    ["fig1", "--kernel", "rational"],
    ["approx", "--kernel", "nope"],
    ["approx", "--trials", "0"],
    ["approx", "--k-min", "5", "--k-max", "2"],
    ["approx", "--n", "ten"],
    ["bounds", "--spectrum", "1,x"],
    ["bounds", "--spectrum", "1,-1"],
    ["coupling", "--resolutions", "8,a"],
    ["approx", "--kernel", "airy", "--method", "nystrom", "--k", "2"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 2 and out == "" and "error" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["nosuch"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["approx", "--k", "two"])
    assert info.value.code == 2


def test_numerical_failure_exit_1(capsys, monkeypatch):
    # a fresh kernel with a jump is not in the resolution cache and never resolves
    step = Kernel(lambda x, y: (x > y).astype(float), 1, "step")
    monkeypatch.setattr("opsketch.operator.MAX_COEFFS", 64)
    monkeypatch.setattr("opsketch.cli.get_kernel", lambda name: step)
    code, out, err = run_cli(capsys, "approx", "--kernel", "airy", "--k", "2", "--trials", "1", "--n", "4")
    assert code == 1 and "numerical failure" in err


def test_approx_rank_one_kernel(capsys):
    code, out, _ = run_cli(capsys, "approx", "--kernel", "xy", "--k", "2", "--trials", "3")
    assert code == 0
    rows = parse(out)
    assert len(rows) == 3
    assert all(float(r["rel_error"]) <= 1e-10 for r in rows)


def test_approx_nystrom_reports_bounds(capsys):
    code, out, _ = run_cli(capsys, "approx", "--kernel", "rational", "--method", "nystrom", "--k", "4",
                           "--n", "16", "--trials", "2")
    assert code == 0
    for r in parse(out):
        err, disc = float(r["error"]), float(r["disc_error"])
        assert disc > 0 and err > 0
        assert float(r["bound_expectation"]) >= disc


def test_bounds_zero_tail_spectrum(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--spectrum", "1,0.5,0,0,0,0,0,0,0,0,0,0", "--k-min", "2",
                           "--k-max", "4", "--p", "4")
    assert code == 0
    first = out.splitlines()[0]
    assert "kernel=spectrum" in first
    for r in parse(out):
        for col in ("expectation_hs", "tail_hs", "expectation_nystrom", "tail_nystrom"):
            assert float(r[col]) == 0


def test_bounds_inapplicable_are_inf(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--k", "1", "--p", "1")
    rows = parse(out)
    assert code == 0 and math.isinf(float(rows[0]["expectation_hs"])) and math.isinf(float(rows[0]["tail_hs"]))


def test_coupling_output(capsys):
    code, out, _ = run_cli(capsys, "coupling", "--trials", "10", "--resolutions", "8,16,32")
    assert code == 0
    rows = parse(out)
    assert [int(r["n"]) for r in rows] == [8, 16, 32]
    med = [float(r["median"]) for r in rows]
    assert med[2] <= med[0]


def test_out_file_matches_stdout(capsys, tmp_path):
    argv = ["approx", "--kernel", "airy", "--k", "3", "--trials", "2", "--n", "16"]
    _, out, _ = run_cli(capsys, *argv)
    path = tmp_path / "a.csv"
    assert cli.main(argv + ["--out", str(path)]) == 0
    assert path.read_bytes() == out.encode()


def test_thread_pool_does_not_change_output(capsys, monkeypatch):
    argv = ["fig1", "--k-min", "1", "--k-max", "5", "--trials", "3"]
    _, serial, _ = run_cli(capsys, *argv)
    monkeypatch.setenv("OPSKETCH_THREADS", "2")
    _, threaded, _ = run_cli(capsys, *argv)
    assert serial == threaded


def test_fig1_columns_and_optimal(capsys):
    from opsketch.kernels import AIRY
    from opsketch.operator import reference_svd
    from opsketch.sketch import optimal_hs_error
    code, out, _ = run_cli(capsys, "fig1", "--k-min", "3", "--k-max", "3", "--trials", "2")
    row = parse(out)[0]
    assert {"n10_median", "n15_q25", "adaptive_q75", "idealized_median", "n10_floor", "optimal"} <= set(row)
    ref = reference_svd(AIRY)
    assert float(row["optimal"]) == pytest.approx(optimal_hs_error(ref, 3, relative=True), rel=1e-12)
