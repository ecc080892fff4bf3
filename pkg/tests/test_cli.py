import json

import numpy as np
import pytest

from nhssb import analysis, cli, plotting
from nhssb.cli import main

MC_TINY = ["--n-therm", "20", "--n-sweeps", "200", "--chains", "2", "--full-every", "20", "--n-bins", "8"]


def test_validate_passes(tmp_path, capsys):
    assert main(["validate", "--out", str(tmp_path)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "checks passed" in out and "FAIL" not in out
    assert (tmp_path / "validate.json").exists()


def test_exact_writes_manifest_and_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["exact", "--L", "12", "--U", "0.4", "--grid", "beta=1:8:4"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(["exact", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "exact.csv").read_bytes() == (b / "exact.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["command"] == "exact" and man["grid"]["beta"] == [1.0, pytest.approx(10 / 3), pytest.approx(17 / 3), 8.0]
    assert len(cli.read_csv(a / "exact.csv")) == 4


def test_mc_outputs_and_reproducibility(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["mc", "--L", "10", "--U", "0.4", "--grid", "beta=2:6:2", "--raw-dump"] + MC_TINY
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("summary.csv", "point_000.csv", "point_001_corr.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rows = cli.read_csv(a / "summary.csv")
    assert len(rows) == 2 and "abs_m_mean" in rows[0]
    raw = np.fromfile(a / "point_000.raw", dtype=cli.mc.RAW_DTYPE)
    assert raw.size == 2 * 200


def test_worker_count_from_environment(monkeypatch, tmp_path):
    args = cli.build_parser().parse_args(["mc"])
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli.worker_count(args) == 3
    assert cli.worker_count(cli.build_parser().parse_args(["mc", "--workers", "2"])) == 2
    monkeypatch.setenv(cli.WORKERS_ENV, "many")
    assert main(["mc", "--L", "8", "--out", str(tmp_path)] + MC_TINY) == cli.EXIT_CONFIG


def test_parallel_workers_match_serial(tmp_path):
    args = ["mc", "--L", "8", "--U", "0.4", "--beta", "3"] + MC_TINY
    assert main(args + ["--out", str(tmp_path / "s")]) == 0
    assert main(args + ["--out", str(tmp_path / "p"), "--workers", "2"]) == 0
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "none"
    assert main(["mc", "--L", "70", "--grid", "beta=5:16:12", "--dry-run", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "points: 12" in text and "estimated cost" in text
    assert not out.exists()


@pytest.mark.parametrize("argv", [
    ["exact", "--grid", "beta=1:2"],
    ["exact", "--grid", "kappa=1:2:3"],
    ["exact", "--grid", "L=8.5"],
    ["exact", "--beta", "1", "--T", "1"],
    ["exact", "--L", "2"],
    ["exact", "--L", "20", "--t-prime", "0.1"],
    ["mc", "--n-sweeps", "0"],
    ["analyze", "--input", "/nonexistent"],
])
def test_configuration_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema": 7}))
    assert main(["exact", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    cfg.write_text(json.dumps({"command": "mc"}))
    assert main(["exact", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_meanfield_command(tmp_path):
    assert main(["meanfield", "--mf-L", "128", "--grid", "U=0:0.4:3", "T=0.05:0.4:4",
                 "--out", str(tmp_path)]) == 0
    rows = cli.read_csv(tmp_path / "meanfield.csv")
    assert len(rows) == 12
    assert len(cli.read_csv(tmp_path / "boundary.csv")) == 3
    assert (tmp_path / "meanfield.svg").exists()


def test_phase_scan_exact(tmp_path):
    assert main(["phase-scan", "--L", "12", "--mf-L", "128", "--grid", "U=0.2:0.4:2", "T=0.1:0.5:3",
                 "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["method"] == "exact"
    assert len(cli.read_csv(tmp_path / "phase.csv")) == 6
    assert (tmp_path / "phase_diagram.svg").exists()


def test_phase_scan_mc(tmp_path):
    assert main(["phase-scan", "--method", "mc", "--L", "8", "--mf-L", "64", "--grid", "U=0.4", "T=0.2:0.5:2",
                 "--out", str(tmp_path)] + MC_TINY) == 0
    assert len(cli.read_csv(tmp_path / "phase.csv")) == 2


def test_domainwall_command(tmp_path):
    assert main(["domainwall", "--L", "40", "--U", "0.4", "--out", str(tmp_path)]) == 0
    assert len(cli.read_csv(tmp_path / "domainwall.csv")) == 39
    info = json.loads((tmp_path / "domainwall.json").read_text())
    assert info["mode"] == "fixed_L_vary_r" and info["fit"]["slope"] > 0
    assert main(["domainwall", "--mode", "fixed_r", "--L-values", "50,100", "--r", "4",
                 "--out", str(tmp_path / "r")]) == 0
    assert len(cli.read_csv(tmp_path / "r" / "domainwall.csv")) == 2


def test_analyze_mc_and_exact(tmp_path):
    run = tmp_path / "run"
    assert main(["mc", "--U", "0.4", "--grid", "L=8:10:2", "beta=2:8:3", "--raw-dump", "--out", str(run)]
                + MC_TINY) == 0
    assert main(["analyze", "--input", str(run)]) == 0
    rep = json.loads((run / "analysis" / "analysis.json").read_text())
    assert rep["kind"] == "mc" and rep["sizes"] == [8, 10] and "beta_c" in rep
    assert (run / "analysis" / "winding.svg").exists()
    assert (run / "analysis" / "point_000_v_hist.svg").exists()
    ex = tmp_path / "ex"
    assert main(["exact", "--U", "0.4", "--grid", "L=12:16:2", "beta=2:12:6", "--out", str(ex)]) == 0
    assert main(["analyze", "--input", str(ex), "--out", str(tmp_path / "an")]) == 0
    assert json.loads((tmp_path / "an" / "analysis.json").read_text())["kind"] == "exact"


def test_svg_is_byte_identical(tmp_path):
    curves = [{"x": [1, 2, 3], "y": [0.1, 2.0, 3.9], "err": [0.1, 0.1, 0.2], "label": "L=70"}]
    a = plotting.plot_winding(tmp_path / "a.svg", curves)
    b = plotting.plot_winding(tmp_path / "b.svg", curves)
    assert a.read_bytes() == b.read_bytes()


def test_empty_series_gives_no_data_figure(tmp_path):
    path = plotting.plot_series(tmp_path / "e.svg", [{"x": [], "y": []}], "T", "m")
    assert "no data" in path.read_text()
    h = analysis.histogram_v(np.array([np.nan + 0j]))
    assert "no data" in plotting.plot_histogram(tmp_path / "h.svg", h).read_text()
    assert "no data" in plotting.plot_phase_diagram(tmp_path / "p.svg", []).read_text()


def test_winding_guides(monkeypatch, tmp_path):
    seen = {}

    def fake(path, curves, xlabel, ylabel, title="", hlines=()):
        seen["hlines"] = tuple(hlines)
        return path

    monkeypatch.setattr(plotting, "plot_series", fake)
    plotting.plot_winding(tmp_path / "w.svg", [])
    assert sorted(seen["hlines"]) == [-4, -2, 0, 2, 4]
