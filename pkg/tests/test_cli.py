import csv
import json
import re

import numpy as np
import pytest

from artifact import cli


def write(path, text):
    path.write_text(text)
    return str(path)


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_simulate_is_byte_identical_across_runs_and_threads(tmp_path):
    outs = []
    for i, threads in enumerate((1, 1, 2)):
        d = tmp_path / f"run{i}"
        d.mkdir()
        code = run_cli("simulate", "--family", "chordal", "--kappa", 2, "--t-max", 0.05, "--dt", 1e-3,
                       "--n-paths", 4, "--seed", 7, "--threads", threads, "--out", d)
        assert code == 0
        outs.append((d / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_simulate_csv_columns(tmp_path):
    assert run_cli("simulate", "--t-max", 0.01, "--dt", 1e-3, "--out", tmp_path) == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "path_id", "point_id", "re_w", "im_w", "re_d", "im_d", "alive"]
    start = [r for r in rows if float(r["t"]) == 0.0]
    assert len(start) == 1
    assert float(start[0]["im_w"]) == 1.0 and float(start[0]["re_d"]) == 1.0


def test_zero_driving_trace_is_vertical(tmp_path):
    code = run_cli("simulate", "--driving", "zero", "--t-max", 1.0, "--dt", 1e-3, "--trace", "--out", tmp_path)
    assert code == 0
    svg = (tmp_path / "trace.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    pts = re.search(r'points="([^"]+)"', svg).group(1).split()
    xs = {round(float(p.split(",")[0]), 6) for p in pts}
    assert len(xs) == 1


def test_radial_disk_stays_inside(tmp_path):
    cfg = write(tmp_path / "r.json", json.dumps({"points": [[0.5, 0.0], [0.0, -0.8], [0.9, 0.1]]}))
    code = run_cli("simulate", "--config", cfg, "--family", "radial", "--chart", "disk", "--kappa", 3,
                   "--t-max", 0.5, "--dt", 1e-3, "--n-paths", 5, "--out", tmp_path)
    assert code == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    r2 = np.array([float(r["re_w"]) ** 2 + float(r["im_w"]) ** 2 for r in rows])
    assert np.all(r2 < 1)


def test_check_pass_and_fail_exit_codes(tmp_path):
    assert run_cli("check", "--family", "chordal", "--kappa", 2, "--nu", 0.7, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["verdict"] == "pass"
    assert set(report) == {"problem", "residuals", "verdict", "mc"}
    code = run_cli("check", "--family", "dipolar", "--kappa", 3, "--kernel", "dirichlet_neumann",
                   "--out", tmp_path)
    assert code == 1


def test_check_scan_prints_table(tmp_path, capsys):
    cfg = write(tmp_path / "scan.toml", """
kernel = "dirichlet_neumann"
n_sample_points = 40
[[grid]]
family = "dipolar"
kappa = [3, 4, 5]
nu = [0, 0.5]
""")
    assert run_cli("check", "--config", cfg, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("pass") == 1 and out.count("fail") == 5
    rows = json.loads((tmp_path / "report.json").read_text())["scan"]
    assert [(r["kappa"], r["nu"]) for r in rows if r["verdict"]] == [(4.0, 0.0)]


def test_malformed_config_exits_with_two(tmp_path):
    bad = write(tmp_path / "bad.toml", "kappa = [not toml")
    assert run_cli("check", "--config", bad) == 2
    unknown = write(tmp_path / "unknown.json", json.dumps({"kapa": 2}))
    assert run_cli("check", "--config", unknown) == 2
    negative = write(tmp_path / "neg.json", json.dumps({"kappa": -1}))
    assert run_cli("simulate", "--config", negative) == 2


def test_flags_override_config(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", json.dumps({"kappa": 2.0, "family": "dipolar"}))
    assert run_cli("classify", "--config", cfg, "--kappa", 5, "--dry-run") == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["pair"]["kappa"] == pytest.approx(5.0)
    assert plan["pair"]["family"] == "dipolar"


def test_dry_run_writes_nothing(tmp_path):
    assert run_cli("simulate", "--dry-run", "--out", tmp_path) == 0
    assert list(tmp_path.iterdir()) == []


def test_classify_from_coefficients(tmp_path):
    cfg = write(tmp_path / "c.json", json.dumps({"delta": [2, -0.5, 0, 0], "sigma": [-2, 0, 0]}))
    assert run_cli("classify", "--config", cfg, "--out", tmp_path) == 0
    out = json.loads((tmp_path / "classify.json").read_text())
    assert out["family"] == "chordal" and out["row"] == 1
    assert out["kappa"] == pytest.approx(4.0) and out["nu"] == pytest.approx(0.5)


def test_mc_at_time_zero(tmp_path):
    code = run_cli("mc", "--family", "chordal", "--kappa", 2, "--t-max", 0, "--n-paths", 10, "--out", tmp_path)
    assert code == 0
    (entry,) = json.loads((tmp_path / "mc.json").read_text())["mc"]
    assert entry["mean"] == entry["M0"] and entry["stderr"] == 0


def test_sample_gff(tmp_path):
    cfg = write(tmp_path / "g.toml", """
n_samples = 2000
[[bumps]]
center = [0.0, 1.0]
radius = 0.3
[[bumps]]
center = [2.0, 1.0]
radius = 0.3
""")
    assert run_cli("sample-gff", "--config", cfg, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "gff_summary.json").read_text())
    assert summary["n_samples"] == 2000
    with open(tmp_path / "gff_samples.csv") as fh:
        assert sum(1 for _ in fh) == 2001


def test_sample_gff_without_bumps_is_an_error(tmp_path):
    assert run_cli("sample-gff", "--out", tmp_path) == 2
