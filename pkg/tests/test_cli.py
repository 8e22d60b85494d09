"""Exit codes, printed examples, and artifact format of the command-line front end."""

import json
import subprocess
import sys

import pytest

from wlab.cli import run


def test_willmore_flat_prints_value_and_target(capsys):
    assert run(["willmore", "--preset", "clifford", "--eps", "0", "--grid", "96x96"]) == 0
    out = capsys.readouterr().out
    assert "W = 78.956835" in out
    assert "target = 78.956835" in out
    assert "(8*pi^2)" in out
    assert "[PASS] flat_value" in out


def test_willmore_coarse_grid_fails_check(capsys):
    assert run(["willmore", "--eps", "0", "--grid", "9x9"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] flat_value" in out
    assert "check(s) failed" in out


def test_so3_critical_prints_index_partition(capsys):
    assert run(["so3-critical", "--alphas", "1,2,3"]) == 0
    out = capsys.readouterr().out
    assert "24 critical points; indices 4/8/8/4" in out


def test_morse_counts_prints_bound(capsys):
    assert run(["morse-counts", "--preset", "t3", "--sc-counts", "1,3,3,1"]) == 0
    out = capsys.readouterr().out
    assert "bound 8" in out
    assert "tilde-counts: 0,0,4,14,18,10,2" in out
    assert "tilde-betti:  1,4,7,7,4,1,0" in out


def test_verify_xi_checks_slope_and_constant(capsys):
    assert run(["verify-xi", "--eta", "0.2,0.1,0.05"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] rate_slope" in out
    assert "[PASS] c0_match" in out


def test_verify_psi0_checks_mean_and_decay(tmp_path, capsys):
    assert run(["verify-psi0", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] psi0_integral" in out
    assert "[PASS] sup_decreasing" in out
    # a plottable field table rides along with the sweep artifact
    field = (tmp_path / "psi0_field.csv").read_text().splitlines()
    assert field[0].startswith("# columns: theta,phi,psi0")
    assert len(field) == 2 + 48 * 96


def test_appendix_integrals_extrapolates(capsys):
    assert run(["appendix-integrals"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] richardson_total" in out
    assert "[PASS] delta_order" in out
    assert "[PASS] basic_integrals" in out


def test_usage_errors_exit_2():
    assert run(["bogus"]) == 2
    assert run([]) == 2
    assert run(["so3-critical", "--alphas", "1,1,3"]) == 2
    assert run(["verify-xi", "--eta", "0.2,0.1"]) == 2
    assert run(["willmore", "--grid", "96"]) == 2
    assert run(["willmore", "--eps", "0.01,0.02"]) == 2
    assert run(["morse-counts", "--sc-counts", "1,-3,3,1"]) == 2
    assert run(["energy-expansion", "--eps", "0.9"]) == 2
    assert run(["--help"]) == 0


def test_convergence_failure_exits_3(capsys):
    assert run(["derivative-check", "--grid", "48x48", "--eps", "0.05", "--eta", "0.1"]) == 3
    err = capsys.readouterr().err
    assert "convergence failure" in err
    assert "routes disagree" in err


def test_curvature_sources(tmp_path):
    inline = '{"diag": [1, 2, 3]}'
    assert run(["willmore", "--eps", "0", "--grid", "96x96", "--curvature", inline]) == 0
    path = tmp_path / "curv.json"
    path.write_text('{"ric": [[1, 0, 0], [0, 2, 0.1], [0, 0.1, 3]]}')
    assert run(["willmore", "--eps", "0", "--grid", "96x96", "--curvature", str(path)]) == 0
    assert run(["willmore", "--curvature", '{"diag": [1, 2]}']) == 2
    assert run(["willmore", "--curvature", '{"nope": 1}']) == 2
    assert run(["willmore", "--curvature", "not-a-file.json"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    assert run(["willmore", "--curvature", str(bad)]) == 2


def test_artifacts_format_and_rerun_bitwise(tmp_path, capsys):
    argv = ["verify-xi", "--eta", "0.2,0.1,0.05", "--out", str(tmp_path)]
    assert run(argv) == 0
    csv_path = tmp_path / "verify_xi.csv"
    json_path = tmp_path / "verify_xi.json"
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# columns: eta,xi,xi_prime,rate,rate_deviation,c0_estimate")
    assert "units" in lines[0]
    # second header line embeds config echo, build tag, seed, and schedule
    assert '"subcommand": "verify-xi"' in lines[1]
    assert "build: wlab-" in lines[1]
    assert "seed: 20260822" in lines[1]
    assert "schedule: grid=" in lines[1]
    assert len(lines) == 2 + 3
    data = json.loads(json_path.read_text())
    assert data["kind"] == "verify_xi"
    assert data["meta"]["seed"] == 20260822
    assert set(data["meta"]) == {"build", "config", "schedule", "seed"}
    assert len(data["rows"]) == 3
    assert data["checks"]["rate_slope"]["passed"] is True
    before_csv = csv_path.read_bytes()
    before_json = json_path.read_bytes()
    assert run(argv) == 0
    capsys.readouterr()
    assert csv_path.read_bytes() == before_csv
    assert json_path.read_bytes() == before_json


def test_seed_recorded_in_every_output(tmp_path, capsys):
    assert run(["morse-counts", "--preset", "s3", "--sc-counts", "1,0,0,1", "--seed", "7", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    for name in ("morse_counts.csv", "morse_counts.json"):
        text = (tmp_path / name).read_text()
        assert "7" in text
    data = json.loads((tmp_path / "morse_counts.json").read_text())
    assert data["meta"]["seed"] == 7
    assert data["meta"]["config"]["seed"] == 7


def test_all_runs_every_stage_and_reports_failures(tmp_path, capsys):
    code = run(
        [
            "all",
            "--grid", "128x128",
            "--eps", "0.02,0.04,0.08",
            "--eta", "0.2,0.1",
            "--delta", "0.2,0.1",
            "--out", str(tmp_path),
        ]
    )
    out = capsys.readouterr().out
    # the quadratic-response amplitude checks are red, so the aggregate exits 1
    assert code == 1
    for stage in (
        "verify-xi",
        "verify-psi0",
        "willmore",
        "appendix-integrals",
        "el-residual",
        "energy-expansion",
        "derivative-check",
        "handle-check",
        "so3-critical",
        "morse-counts",
    ):
        assert ("== %s ==" % stage) in out
    assert "[PASS] verify-xi.rate_slope" in out
    assert "[PASS] willmore.flat_value" in out
    assert "[PASS] derivative-check.routes_agree" in out
    assert "[PASS] handle-check.delta_halving" in out
    assert "[PASS] so3-critical.count" in out
    assert "[FAIL] energy-expansion.base_eps_order" in out
    assert "[FAIL] energy-expansion.r_coefficient" in out
    assert "[FAIL] derivative-check.amplitude_within_25pct" in out
    assert "check(s) failed" in out
    # every stage wrote both artifact flavors
    written = {p.name for p in tmp_path.iterdir()}
    for stage in ("verify_xi", "energy_expansion", "so3_critical", "morse_counts"):
        assert stage + ".csv" in written
        assert stage + ".json" in written


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "wlab", "morse-counts", "--preset", "t3", "--sc-counts", "1,3,3,1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "bound 8" in proc.stdout
