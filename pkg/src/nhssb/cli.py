"""Command-line front end.

Every command resolves its configuration (JSON file, then flags), writes
``manifest.json`` into the output directory and then computes.  The manifest
is itself a valid ``--config`` file, so ``nhssb <cmd> --config out/manifest.json``
reproduces a run.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure (details in
``error.json``), 4 failed oracle validation.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, analysis, exact, mc, meanfield, plotting, validation
from .errors import ConfigError, SpectralError
from .model import ModelParams

logger = logging.getLogger("nhssb")

SCHEMA = 1
WORKERS_ENV = "NHSSB_WORKERS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4
COMMANDS = ("mc", "exact", "meanfield", "phase-scan", "domainwall", "analyze", "validate")
GRID_AXES = ("U", "T", "beta", "L", "J", "t_prime")
PARAM_FLAGS = {"t": "t", "t_prime": "t_prime", "U": "U_re", "U_im": "U_im", "J": "J", "L": "L",
               "beta": "beta", "bc": "bc"}
MC_KEYS = ("n_therm", "n_sweeps", "chains", "measure_every", "full_every", "n_bins", "fast_path",
           "start", "global_flip", "raw_dump")
MF_KEYS = ("mf_L", "functional", "dT")
DW_KEYS = ("mode", "r", "alpha", "L_values", "fit_range")
DEFAULTS: dict[str, Any] = {
    "seed": 12345,
    "mc": {"n_therm": 10_000, "n_sweeps": 100_000, "chains": 8, "measure_every": 1, "full_every": 100,
           "n_bins": 32, "fast_path": "auto", "start": "mixed", "global_flip": True, "raw_dump": False},
    "meanfield": {"mf_L": meanfield.QUASI_CONTINUUM_L, "functional": "standard", "dT": 1e-3},
    "domainwall": {"mode": "fixed_L", "r": 4, "alpha": 0.25, "L_values": [100, 200, 400, 800, 1600],
                   "fit_range": None},
    "method": "auto",
    "max_L": 12,
    "window": None,
}


# -- grid and config ---------------------------------------------------------

def parse_grid_item(text: str) -> tuple[str, list[float]]:
    """``name=start:stop:count`` (inclusive) or ``name=value``."""
    if "=" not in text:
        raise ConfigError(f"grid item {text!r} must look like name=start:stop:count")
    name, spec = text.split("=", 1)
    name = name.strip()
    if name not in GRID_AXES:
        raise ConfigError(f"unknown grid axis {name!r}; choose from {GRID_AXES}")
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            values = [float(parts[0])]
        elif len(parts) == 3:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ConfigError("grid count must be >= 1")
            values = [start] if count == 1 else [float(v) for v in np.linspace(start, stop, count)]
        else:
            raise ConfigError(f"grid item {text!r}: expected start:stop:count")
    except ValueError as exc:
        raise ConfigError(f"grid item {text!r}: {exc}") from exc
    if not all(math.isfinite(v) for v in values):
        raise ConfigError(f"grid item {text!r} has non-finite values")
    if name == "L":
        if any(v != int(v) for v in values):
            raise ConfigError("L grid values must be integers")
        values = [int(v) for v in values]
    return name, values


def expand_points(base: ModelParams, grid: dict[str, list]) -> list[tuple[dict, ModelParams]]:
    """Cartesian product of the grid axes in insertion order."""
    if "T" in grid and "beta" in grid:
        raise ConfigError("grid may contain T or beta, not both")
    names = list(grid)
    points = []
    for combo in itertools.product(*(grid[n] for n in names)):
        coords = dict(zip(names, combo))
        changes = {}
        for name, value in coords.items():
            if name == "T":
                if value <= 0:
                    raise ConfigError("temperatures must be positive")
                changes["beta"] = 1.0 / value
            elif name == "U":
                changes["U_re"] = value
            else:
                changes[name] = value
        points.append((coords, base.replace(**changes)))
    return points


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r} (expected {SCHEMA})")
    return data


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    cfg = load_config(args.config)
    if cfg.get("command") not in (None, args.command):
        raise ConfigError(f"config is for command {cfg['command']!r}, not {args.command!r}")
    params = dict(cfg.get("params", {}))
    for flag, key in PARAM_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            params[key] = value
    if getattr(args, "T", None) is not None:
        if args.beta is not None:
            raise ConfigError("give --T or --beta, not both")
        params["beta"] = 1.0 / args.T
    base = ModelParams.from_dict(params)
    grid = {k: list(v) for k, v in cfg.get("grid", {}).items()}
    for item in getattr(args, "grid", None) or []:
        name, values = parse_grid_item(item)
        grid[name] = values
    for name in grid:
        if name not in GRID_AXES:
            raise ConfigError(f"unknown grid axis {name!r}")
    resolved = {
        "schema": SCHEMA,
        "command": args.command,
        "code_version": __version__,
        "params": base.to_dict(),
        "grid": grid,
        "seed": cfg.get("seed", DEFAULTS["seed"]) if args.seed is None else args.seed,
    }
    for section, keys in (("mc", MC_KEYS), ("meanfield", MF_KEYS), ("domainwall", DW_KEYS)):
        sec = dict(DEFAULTS[section])
        sec.update(cfg.get(section, {}))
        for key in keys:
            value = getattr(args, key, None)
            if value is not None:
                sec[key] = value
        resolved[section] = sec
    for key in ("method", "max_L", "window"):
        value = getattr(args, key, None)
        resolved[key] = cfg.get(key, DEFAULTS[key]) if value is None else value
    if getattr(args, "input", None) is not None:
        resolved["input"] = str(args.input)
    elif "input" in cfg:
        resolved["input"] = cfg["input"]
    return resolved


def worker_count(args) -> int:
    if getattr(args, "workers", None):
        return max(1, int(args.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
    return 1


# -- output helpers ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v)
            except (TypeError, ValueError):
                conv[k] = v
        out.append(conv)
    return out


def _finite(o):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, np.ndarray):
        return _finite(o.tolist())
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    if isinstance(o, np.integer):
        return int(o)
    return o


def write_json(path: Path, data) -> Path:
    text = json.dumps(_finite(data), indent=2, sort_keys=True, default=_json_default, allow_nan=False)
    path.write_text(text + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def prepare_output(out: str | None, resolved: dict) -> Path:
    if not out:
        raise ConfigError("--out is required")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    write_json(path / "manifest.json", resolved)
    return path


def param_columns(p: ModelParams) -> dict:
    d = p.to_dict()
    d["T"] = 1.0 / p.beta
    return d


PARAM_COLS = ["t", "t_prime", "U_re", "U_im", "J", "L", "beta", "T", "bc"]


# -- plans -------------------------------------------------------------------

def mc_manifest(p: ModelParams, sec: dict, seed: int) -> mc.RunManifest:
    fast = {"auto": None, "on": True, "off": False}.get(sec["fast_path"], sec["fast_path"])
    return mc.RunManifest(p, seed=int(seed), n_therm=int(sec["n_therm"]), n_sweeps=int(sec["n_sweeps"]),
                          n_chains=int(sec["chains"]), measure_every=int(sec["measure_every"]),
                          full_every=int(sec["full_every"]), fast_path=fast, start=sec["start"],
                          global_flip=bool(sec["global_flip"]), n_bins=int(sec["n_bins"]))


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), index]).generate_state(2, np.uint32).view(np.uint64)[0])


def mc_cost(man: mc.RunManifest) -> float:
    L = man.params.L
    sweeps = (man.n_therm + man.n_sweeps) * man.n_chains
    per_flip = 1.0 if man.use_table else float(L) ** 3
    full = man.n_chains * (man.n_measurements // man.full_every if man.full_every else 0) * float(L) ** 3
    return sweeps * L * per_flip + full


def describe_plan(resolved: dict, points, extra: str = "") -> str:
    lines = [f"command: {resolved['command']}", f"points: {len(points)}"]
    if resolved["command"] in ("mc",) or (resolved["command"] == "phase-scan" and resolved.get("_uses_mc")):
        sec = resolved["mc"]
        total = sum(mc_cost(mc_manifest(p, sec, 0)) for _, p in points)
        lines.append(f"chains per point: {sec['chains']}, sweeps per chain: {sec['n_therm']} + {sec['n_sweeps']}")
        lines.append(f"estimated cost: {total:.3g} elementary operations")
    if extra:
        lines.append(extra)
    return "\n".join(lines)


# -- commands ----------------------------------------------------------------

def _executor(workers: int):
    return cf.ProcessPoolExecutor(max_workers=workers) if workers > 1 else None


def run_mc_points(points, sec: dict, seed: int, workers: int) -> list[mc.RunResult]:
    manifests = [mc_manifest(p, sec, point_seed(seed, i)) for i, (_, p) in enumerate(points)]
    tasks = [(i, c) for i, m in enumerate(manifests) for c in range(m.n_chains)]
    ex = _executor(workers)
    try:
        if ex is None:
            chains = [mc.run_single_chain(manifests[i], c) for i, c in tasks]
        else:
            chains = list(ex.map(mc.run_single_chain, [manifests[i] for i, _ in tasks], [c for _, c in tasks]))
    finally:
        if ex is not None:
            ex.shutdown()
    grouped: dict[int, list] = {}
    for (i, _), ch in zip(tasks, chains):
        grouped.setdefault(i, []).append(ch)
    return [mc.reduce_chains(manifests[i], grouped[i]) for i in range(len(manifests))]


def cmd_mc(args, resolved, base) -> int:
    points = expand_points(base, resolved["grid"]) or [({}, base)]
    if args.dry_run:
        print(describe_plan(resolved, points))
        return EXIT_OK
    out = prepare_output(args.out, resolved)
    results = run_mc_points(points, resolved["mc"], resolved["seed"], worker_count(args))
    rows = []
    for i, ((coords, p), res) in enumerate(zip(points, results)):
        row = param_columns(p)
        for name, est in res.estimates.items():
            row[f"{name}_mean"], row[f"{name}_err"], row[f"{name}_tau"] = est.mean, est.err, est.tau
        row["n_warnings"] = len(res.warnings)
        rows.append(row)
        write_csv(out / f"point_{i:03d}.csv", mc.binned_table(res))
        write_json(out / f"point_{i:03d}.json", res.sidecar())
        if resolved["mc"]["raw_dump"]:
            res.raw().tofile(out / f"point_{i:03d}.raw")
        corr = mc.correlation_estimates(res)
        if corr:
            write_csv(out / f"point_{i:03d}_corr.csv",
                      [{k: corr[k][j] for k in corr} for j in range(len(corr["r"]))])
        for w in res.warnings:
            logger.warning("point %d: %s", i, w)
    cols = PARAM_COLS + [c for c in rows[0] if c not in PARAM_COLS]
    write_csv(out / "summary.csv", rows, cols)
    print(f"wrote {len(rows)} point(s) to {out}")
    return EXIT_OK


def cmd_exact(args, resolved, base) -> int:
    points = expand_points(base, resolved["grid"]) or [({}, base)]
    for _, p in points:
        if (p.t_prime != 0.0 or not p.pbc) and p.L > 16:
            raise ConfigError("exact sums beyond L=16 need t'=0 and periodic boundaries")
    if args.dry_run:
        print(describe_plan(resolved, points, "method: class sums (t'=0 ring) or enumeration (L <= 16)"))
        return EXIT_OK
    out = prepare_output(args.out, resolved)
    rows = []
    for _, p in points:
        res = exact.exact_observables(p) if (p.t_prime == 0.0 and p.pbc) else exact.brute_force(p)
        rows.append({**param_columns(p), **res.as_dict()})
    write_csv(out / "exact.csv", rows, PARAM_COLS + list(exact.ExactResult.__dataclass_fields__))
    print(f"wrote {len(rows)} point(s) to {out / 'exact.csv'}")
    return EXIT_OK


def _mf_axes(resolved) -> tuple[list, list]:
    grid = resolved["grid"]
    U = grid.get("U", [resolved["params"]["U_re"]])
    if "T" in grid:
        T = grid["T"]
    elif "beta" in grid:
        T = [1.0 / b for b in grid["beta"]]
    else:
        T = [1.0 / resolved["params"]["beta"]]
    return list(U), list(T)


def _boundary(base, U, T, sec) -> meanfield.PhaseBoundary:
    return meanfield.trace_boundary(base, U, T, L=int(sec["mf_L"]), functional=sec["functional"],
                                    dT=float(sec["dT"]))


def _boundary_rows(b: meanfield.PhaseBoundary) -> list[dict]:
    return [{"U": c.U, "T_c": c.T_c, "T_low": c.T_low, "n_crossings": len(c.crossings)} for c in b.columns]


def cmd_meanfield(args, resolved, base) -> int:
    U, T = _mf_axes(resolved)
    sec = resolved["meanfield"]
    if sec["functional"] not in meanfield.FUNCTIONALS:
        raise ConfigError(f"unknown functional {sec['functional']!r}")
    if args.dry_run:
        print(describe_plan(resolved, [None] * (len(U) * len(T)),
                            f"momentum grid L={sec['mf_L']}, functional={sec['functional']}"))
        return EXIT_OK
    out = prepare_output(args.out, resolved)
    rows = meanfield.scan_grid(base, U, T, L=int(sec["mf_L"]), functional=sec["functional"])
    write_csv(out / "meanfield.csv", rows, ["U", "T", "m_selected", "F", "n_solutions"])
    b = _boundary(base, U, T, sec) if len(T) > 1 else None
    if b is not None:
        write_csv(out / "boundary.csv", _boundary_rows(b), ["U", "T_c", "T_low", "n_crossings"])
    plot_rows = [{"U": r["U"], "T": r["T"], "abs_m": r["m_selected"]} for r in rows]
    plotting.plot_phase_diagram(out / "meanfield.svg", plot_rows, b.polyline() if b else None)
    print(f"wrote mean-field scan to {out}")
    return EXIT_OK


def cmd_phase_scan(args, resolved, base) -> int:
    U, T = _mf_axes(resolved)
    grid = {"U": U, "T": T}
    points = expand_points(base, grid)
    method = resolved["method"]
    if method == "auto":
        method = "exact" if base.t_prime == 0.0 and base.pbc else "mc"
    if method == "exact" and not (base.t_prime == 0.0 and base.pbc):
        raise ConfigError("exact phase scan needs t'=0 and periodic boundaries")
    resolved["_uses_mc"] = method == "mc"
    if args.dry_run:
        print(describe_plan(resolved, points, f"method: {method}; mean-field overlay L={resolved['meanfield']['mf_L']}"))
        return EXIT_OK
    resolved.pop("_uses_mc")
    resolved["method"] = method
    out = prepare_output(args.out, resolved)
    rows = []
    if method == "exact":
        for coords, p in points:
            res = exact.exact_observables(p)
            rows.append({"U": coords["U"], "T": coords["T"], "abs_m": res.abs_m, "abs_m_err": 0.0,
                         "specific_heat": res.specific_heat, "winding_sector": res.winding_sector})
    else:
        for (coords, _), res in zip(points, run_mc_points(points, resolved["mc"], resolved["seed"],
                                                         worker_count(args))):
            e = res.estimates
            rows.append({"U": coords["U"], "T": coords["T"], "abs_m": e["abs_m"].mean, "abs_m_err": e["abs_m"].err,
                         "specific_heat": e["specific_heat"].mean,
                         "winding_sector": e["winding_sector"].mean if "winding_sector" in e else float("nan")})
    write_csv(out / "phase.csv", rows, ["U", "T", "abs_m", "abs_m_err", "specific_heat", "winding_sector"])
    b = _boundary(base, U, T, resolved["meanfield"])
    write_csv(out / "boundary.csv", _boundary_rows(b), ["U", "T_c", "T_low", "n_crossings"])
    plotting.plot_phase_diagram(out / "phase_diagram.svg", rows, b.polyline())
    print(f"wrote phase scan ({len(rows)} points) to {out}")
    return EXIT_OK


def cmd_domainwall(args, resolved, base) -> int:
    sec = resolved["domainwall"]
    mode = analysis.ScanMode.parse(sec["mode"])
    if args.dry_run:
        n = base.L - 1 if mode is analysis.ScanMode.FIXED_L else len(sec["L_values"])
        print(describe_plan(resolved, [None] * n, f"mode: {mode.value}, ground-state evaluations: {n}"))
        return EXIT_OK
    out = prepare_output(args.out, resolved)
    fit_range = tuple(sec["fit_range"]) if sec["fit_range"] else None
    scan = analysis.domain_wall_scan(base, mode, L_values=sec["L_values"], r=int(sec["r"]),
                                     alpha=float(sec["alpha"]), fit_range=fit_range)
    xname = "r" if mode is analysis.ScanMode.FIXED_L else "L"
    write_csv(out / "domainwall.csv", [{xname: int(x), "dE": y} for x, y in scan.points], [xname, "dE"])
    write_json(out / "domainwall.json", {
        "mode": mode.value, "method": scan.method, "saturation": scan.saturation,
        "fit": None if scan.fit is None else scan.fit.__dict__, "params": scan.params,
    })
    plotting.plot_domain_wall(out / "domainwall.svg", scan)
    print(f"wrote domain-wall scan to {out}")
    return EXIT_OK


def cmd_analyze(args, resolved, base) -> int:
    src = Path(resolved.get("input") or "")
    if not src.is_dir():
        raise ConfigError(f"--input {src} is not a directory")
    if (src / "summary.csv").exists():
        rows, kind = read_csv(src / "summary.csv"), "mc"
    elif (src / "exact.csv").exists():
        rows, kind = read_csv(src / "exact.csv"), "exact"
    else:
        raise ConfigError(f"{src} has neither summary.csv nor exact.csv")
    if args.dry_run:
        print(f"command: analyze\ninput: {src} ({kind}, {len(rows)} rows)")
        return EXIT_OK
    out = prepare_output(args.out or str(src / "analysis"), resolved)

    def col(r, name):
        if kind == "mc":
            return r.get(f"{name}_mean", float("nan")), r.get(f"{name}_err", 0.0)
        return r.get(name, float("nan")), 0.0

    by_L: dict[int, list] = {}
    for r in rows:
        by_L.setdefault(int(r["L"]), []).append(r)
    report: dict[str, Any] = {"source": str(src), "kind": kind, "sizes": sorted(by_L)}
    figures = {"abs_m": "order_parameter.svg", "specific_heat": "specific_heat.svg"}
    out_rows = []
    cv_series = {}
    winding_curves, winding_report = [], {}
    for name, fname in figures.items():
        curves = []
        for L, rs in sorted(by_L.items()):
            rs = sorted(rs, key=lambda r: r["T"])
            vals = [col(r, name) for r in rs]
            curves.append({"x": [r["T"] for r in rs], "y": [v[0] for v in vals], "err": [v[1] for v in vals],
                           "label": f"L={L}"})
            if name == "specific_heat":
                cv_series[L] = analysis.ObservableSeries("beta", [r["beta"] for r in rs], [v[0] for v in vals],
                                                         [abs(v[1]) for v in vals], L, "specific_heat")
        plotting.plot_series(out / fname, curves, "T", name)
    for L, rs in sorted(by_L.items()):
        rs = sorted(rs, key=lambda r: r["T"])
        for r in rs:
            out_rows.append({"L": L, "T": r["T"], "abs_m": col(r, "abs_m")[0],
                             "specific_heat": col(r, "specific_heat")[0],
                             "winding_sector": col(r, "winding_sector")[0]})
        w = [col(r, "winding_sector") for r in rs]
        if all(np.isfinite(v[0]) for v in w) and rs:
            series = analysis.ObservableSeries("T", [r["T"] for r in rs], [v[0] for v in w],
                                               [abs(v[1]) for v in w], L, "winding_sector")
            wa = analysis.find_plateaus(series)
            winding_report[str(L)] = {"plateaus": [p.__dict__ for p in wa.plateaus], "transitions": wa.transitions}
            winding_curves.append({"x": series.axis, "y": series.mean, "err": series.err, "label": f"L={L}"})
    plotting.plot_winding(out / "winding.svg", winding_curves)
    report["winding"] = winding_report
    if len(cv_series) >= 2 and all(len(s) >= 3 for s in cv_series.values()):
        window = tuple(resolved["window"]) if resolved.get("window") else None
        est = analysis.betac_from_scaling(cv_series, window)
        report["beta_c"] = {"beta_c": est.beta_c, "err": est.err, "reliable": est.reliable, "reason": est.reason,
                            "peaks": [p.__dict__ for p in est.peaks]}
    hists = {}
    for raw in sorted(src.glob("point_*.raw")):
        data = np.fromfile(raw, dtype=mc.RAW_DTYPE)
        v = data["v_re"] + 1j * data["v_im"]
        h = analysis.histogram_v(v)
        plotting.plot_histogram(out / f"{raw.stem}_v_hist.svg", h)
        hists[raw.stem] = h.symmetry_score
    report["v_histogram_symmetry"] = hists
    write_csv(out / "analysis.csv", out_rows, ["L", "T", "abs_m", "specific_heat", "winding_sector"])
    write_json(out / "analysis.json", report)
    print(f"wrote analysis to {out}")
    return EXIT_OK


def cmd_validate(args, resolved, base) -> int:
    if args.dry_run:
        print(f"command: validate\nchecks: {len(validation.CHECKS)} (L <= {resolved['max_L']})")
        return EXIT_OK
    checks = validation.run_all(resolved["max_L"], int(resolved["seed"]))
    for c in checks:
        print(c.line())
    if args.out:
        out = prepare_output(args.out, resolved)
        write_json(out / "validate.json", [c.__dict__ for c in checks])
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


HANDLERS = {"mc": cmd_mc, "exact": cmd_exact, "meanfield": cmd_meanfield, "phase-scan": cmd_phase_scan,
            "domainwall": cmd_domainwall, "analyze": cmd_analyze, "validate": cmd_validate}


# -- argument parsing --------------------------------------------------------

def _float_pair(text: str) -> list[float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from exc
    return [a, b]


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="JSON config (same schema as manifest.json)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    g.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    g.add_argument("--log-level", default="WARNING")
    m = common.add_argument_group("model")
    m.add_argument("--t", type=float)
    m.add_argument("--t-prime", dest="t_prime", type=float)
    m.add_argument("--U", type=float, help="real coupling U")
    m.add_argument("--U-im", dest="U_im", type=float, help="imaginary coupling (Hermitian control)")
    m.add_argument("--J", type=float)
    m.add_argument("--L", type=int)
    m.add_argument("--beta", type=float)
    m.add_argument("--T", type=float)
    m.add_argument("--bc", choices=["PBC", "OBC"])
    m.add_argument("--grid", nargs="+", metavar="AXIS=START:STOP:COUNT")

    mcp = argparse.ArgumentParser(add_help=False)
    g = mcp.add_argument_group("monte carlo")
    g.add_argument("--n-therm", dest="n_therm", type=int)
    g.add_argument("--n-sweeps", dest="n_sweeps", type=int)
    g.add_argument("--chains", type=int)
    g.add_argument("--measure-every", dest="measure_every", type=int)
    g.add_argument("--full-every", dest="full_every", type=int,
                   help="scalar measurements between velocity/correlation measurements (0: never)")
    g.add_argument("--n-bins", dest="n_bins", type=int)
    g.add_argument("--fast-path", dest="fast_path", choices=["auto", "on", "off"])
    g.add_argument("--start", choices=["cold", "hot", "mixed"])
    g.add_argument("--no-global-flip", dest="global_flip", action="store_const", const=False)
    g.add_argument("--raw-dump", dest="raw_dump", action="store_const", const=True)

    mfp = argparse.ArgumentParser(add_help=False)
    g = mfp.add_argument_group("mean field")
    g.add_argument("--mf-L", dest="mf_L", type=int, help="momentum grid size")
    g.add_argument("--functional", choices=list(meanfield.FUNCTIONALS))
    g.add_argument("--dT", type=float, help="boundary resolution in T")

    parser = argparse.ArgumentParser(prog="nhssb", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("mc", parents=[common, mcp], help="Monte Carlo over a parameter grid")
    p = sub.add_parser("exact", parents=[common], help="exact sums over a parameter grid")
    p = sub.add_parser("meanfield", parents=[common, mfp], help="mean-field scan and boundary")
    p = sub.add_parser("phase-scan", parents=[common, mcp, mfp], help="U-T phase diagram with mean-field overlay")
    p.add_argument("--method", choices=["auto", "exact", "mc"])
    p = sub.add_parser("domainwall", parents=[common], help="domain-wall ground-state energy scans")
    p.add_argument("--mode", choices=["fixed_L", "fixed_r", "fixed_alpha", "fixed_L_vary_r", "fixed_r_vary_L",
                                      "fixed_alpha_vary_L"])
    p.add_argument("--r", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--L-values", dest="L_values", type=_int_list)
    p.add_argument("--fit-range", dest="fit_range", type=_float_pair)
    p = sub.add_parser("analyze", parents=[common], help="figures and derived quantities from a run directory")
    p.add_argument("--input", required=False)
    p.add_argument("--window", type=_float_pair, help="beta window for the C_V peak search")
    p = sub.add_parser("validate", parents=[common], help="small-system oracle suite")
    p.add_argument("--max-L", dest="max_L", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        resolved = resolve(args)
        base = ModelParams.from_dict(resolved["params"])
        return HANDLERS[args.command](args, resolved, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpectralError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if getattr(args, "out", None):
            try:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                write_json(Path(args.out) / "error.json", {"type": type(exc).__name__, "message": str(exc),
                                                           "command": args.command})
            except OSError:
                pass
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
