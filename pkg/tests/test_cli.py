import subprocess
import sys

import pytest

from tamesde import cli


def run_cli(capsys, *argv):
    status = cli.main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def assert_single_diagnostic(err, code):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith(f"tamesde: error[{code}]: ")


@pytest.mark.slow
def test_table_is_byte_identical_across_runs_and_workers(tmp_path, capsys):
    common = ["table", "--problem", "cubic-const", "--scheme", "monotone", "--alpha", "0.5",
              "--n", "2048,4096", "--n-ref", "65536", "--trials", "200", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(capsys, *common, "--out", str(a))[0] == 0
    assert run_cli(capsys, *common, "--workers", "3", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = [ln for ln in a.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "n,trials,mse,ci,blowups"
    assert [r.split(",")[0] for r in rows[1:]] == ["2048", "4096"]
    assert (tmp_path / "a.plot.csv").read_bytes() == (tmp_path / "b.plot.csv").read_bytes()


def test_rate_writes_fit_and_plot_data(tmp_path, capsys):
    out = tmp_path / "rate.csv"
    status, stdout, _ = run_cli(capsys, "rate", "--problem", "ou", "--scheme", "vanilla",
                                "--n", "8,16,32", "--n-ref", "256", "--trials", "50", "--out", str(out))
    assert status == 0
    assert "fitted slope" in stdout
    assert out.read_text().splitlines()[-1].startswith("# rate slope=")
    plot = (tmp_path / "rate.plot.csv").read_text().splitlines()
    assert plot[0] == "log2_n,log2_mse"
    assert [float(ln.split(",")[0]) for ln in plot[1:]] == [3.0, 4.0, 5.0]


def test_verify_cubic_passes(tmp_path, capsys):
    out = tmp_path / "verify.csv"
    status, stdout, err = run_cli(capsys, "verify", "--problem", "cubic-mult", "--n", "4096",
                                  "--alpha", "0.5", "--out", str(out))
    assert status == 0, err
    lines = out.read_text().splitlines()
    assert lines[0] == "check,n,region,pairs,max_violation,pass"
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    assert {ln.split(",")[0] for ln in body} == {"monotonicity", "growth"}
    assert all(ln.endswith(",true") for ln in body)
    assert any(ln.startswith("# s_n n=4096") for ln in lines)


def test_diverge_report(tmp_path, capsys):
    out = tmp_path / "div.csv"
    status, stdout, _ = run_cli(capsys, "diverge", "--problem", "cubic-mult", "--x0", "50", "--n", "16",
                                "--trials", "20", "--out", str(out))
    assert status == 0
    rows = {ln.split(",")[0]: ln.split(",") for ln in out.read_text().splitlines()[1:]}
    assert float(rows["vanilla"][2]) == 1.0
    assert float(rows["monotone"][2]) == 0.0


def test_moments_command(tmp_path, capsys):
    out = tmp_path / "m.csv"
    status, _, _ = run_cli(capsys, "moments", "--problem", "cubic-mult", "--n", "64,256",
                           "--trials", "40", "--p", "2,4", "--out", str(out))
    assert status == 0
    assert len([ln for ln in out.read_text().splitlines() if not ln.startswith("#")]) == 5


def test_config_file_problem(tmp_path, capsys):
    cfg = tmp_path / "ou.cfg"
    cfg.write_text("state_dim = 1\ndrift.1 = -x1\ndiffusion = 0\nmonotonicity = 1\n"
                   "moment_order = 4\ninitial = point 1\n")
    out = tmp_path / "t.csv"
    status, _, err = run_cli(capsys, "table", "--config", str(cfg), "--scheme", "vanilla",
                             "--n", "4,16", "--n-ref", "64", "--trials", "4", "--out", str(out))
    assert status == 0, err


@pytest.mark.parametrize(
    "argv",
    [
        ["table", "--problem", "nope"],
        ["table", "--problem", "ou", "--scheme", "milstein"],
        ["table", "--problem", "ou", "--alpha", "0.7"],
        ["table", "--problem", "ou", "--n", "3", "--n-ref", "64"],
        ["table", "--problem", "ou", "--n", "x,y"],
        ["table", "--problem", "ou", "--trials", "1", "--n", "4", "--n-ref", "8"],
        ["table"],
        ["frobnicate", "--problem", "ou"],
        ["moments", "--problem", "cubic-mult", "--p", "12", "--n", "4", "--trials", "2"],
    ],
)
def test_config_errors_exit_2(argv, capsys, tmp_path):
    status, _, err = run_cli(capsys, *argv, "--out", str(tmp_path / "x.csv"))
    assert status == cli.EXIT_CONFIG
    assert_single_diagnostic(err, "CONFIG")


def test_empty_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("")
    status, _, err = run_cli(capsys, "verify", "--config", str(cfg), "--out", str(tmp_path / "v.csv"))
    assert status == 2
    assert_single_diagnostic(err, "CONFIG")


STEEP = "state_dim = 1\ndrift.1 = -x1 - 0.004 x1^9\ndiffusion = 0\nmonotonicity = 1\nmoment_order = 4\ninitial = point 0.1\n"


@pytest.mark.parametrize("command", ["table", "verify"])
def test_undefined_scheme_exit_3(command, tmp_path, capsys):
    # s_1 = 250^(1/9) < 2, so the monotone scheme is undefined at n = 1
    cfg = tmp_path / "steep.cfg"
    cfg.write_text(STEEP)
    extra = ["--n-ref", "64", "--trials", "2"] if command == "table" else []
    status, _, err = run_cli(capsys, command, "--config", str(cfg), "--n", "1,64", *extra,
                             "--out", str(tmp_path / "o.csv"))
    assert status == cli.EXIT_UNDEFINED
    assert_single_diagnostic(err, "SCHEME_UNDEFINED")


def test_unwritable_output_exit_4(tmp_path, capsys):
    target = tmp_path / "missing-dir" / "out.csv"
    status, _, err = run_cli(capsys, "diverge", "--problem", "ou", "--n", "4", "--trials", "2",
                             "--out", str(target))
    assert status == cli.EXIT_RUNTIME
    assert_single_diagnostic(err, "IO")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tamesde", "diverge", "--problem", "cubic-mult", "--deterministic",
         "--n", "16", "--trials", "2", "--out", str(tmp_path / "d.csv")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "vanilla" in proc.stdout
