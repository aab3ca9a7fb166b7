"""Command line entry point ``slitflow``.

Subcommands::

    slitflow simulate    trajectories (CSV) and an optional trace plot (SVG)
    slitflow check       coupling residuals or a verdict scan (JSON)
    slitflow mc          Monte Carlo martingale statistics (JSON)
    slitflow sample-gff  bump-pairing samples (CSV) with a summary (JSON)
    slitflow classify    family and invariants of a field pair (JSON)

Parameters come from a TOML or JSON file given with ``--config``; command
line flags override file values.  Unknown keys are rejected.  Exit codes:
0 success (or a passing check), 1 a failing check, 2 configuration or
evaluation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields

import numpy as np

from . import coupling as cp
from . import fields as fl
from . import geometry as geo
from . import gff
from . import loewner as lw
from .errors import ArtifactError, ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Resolved parameters of one command (documented keys of the config file)."""

    family: str = fl.CHORDAL
    kappa: float = 4.0
    nu: float = 0.0
    xi: float = 0.0
    chart: str = geo.HALFPLANE
    t_max: float = 0.25
    dt: float = 1e-4
    n_paths: int = 1
    seed: int = 0
    threads: int = 1
    points: list = field(default_factory=lambda: [[0.0, 1.0]])
    pairs: list = field(default_factory=list)
    kernel: str = gff.DIRICHLET
    bumps: list = field(default_factory=list)
    tol_analytic: float = cp.ANALYTIC_TOL
    tol_flow: float = cp.FLOW_TOL
    method: str = "analytic"
    n_sample_points: int = 200
    observable: str = cp.M1_ETA
    n_samples: int = 10_000
    n_quad: int = 32
    driving: str = "brownian"
    scheme: str = lw.ITO
    record_dt: float | None = None
    trace: bool = False
    trace_points: int = 200
    grid: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    out: str = "."

    def validate(self) -> "RunConfig":
        if self.family not in fl.FAMILIES and self.family != fl.GENERAL:
            raise ConfigError(f"unknown family {self.family!r}")
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_max < 0:
            raise ConfigError("t_max must be nonnegative")
        if self.n_paths < 1 or self.threads < 1 or self.n_samples < 2:
            raise ConfigError("n_paths and threads must be >= 1, n_samples >= 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.chart not in geo.CHARTS:
            raise ConfigError(f"unknown chart {self.chart!r}")
        if self.kernel not in gff.KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.method not in ("analytic", "flow"):
            raise ConfigError("method must be 'analytic' or 'flow'")
        if self.observable not in (cp.M1_ETA, cp.M2_TWO_POINT):
            raise ConfigError(f"unknown observable {self.observable!r}")
        if self.driving not in ("brownian", "zero"):
            raise ConfigError("driving must be 'brownian' or 'zero'")
        if self.scheme not in (lw.ITO, lw.STRAT):
            raise ConfigError("scheme must be 'ito' or 'strat'")
        if self.record_dt is not None and not self.record_dt > 0:
            raise ConfigError("record_dt must be positive")
        try:
            self.point_list()
            [tuple(_complex(p) for p in pq) for pq in self.pairs]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed point: {exc}") from exc
        return self

    def point_list(self) -> list:
        return [_complex(p) for p in self.points]

    def pair_list(self) -> list:
        return [tuple(_complex(p) for p in pq) for pq in self.pairs]

    def field_pair(self) -> fl.SlitFieldPair:
        if self.delta or self.sigma:
            if len(self.delta) != 4 or len(self.sigma) != 3:
                raise ConfigError("delta needs 4 and sigma 3 coefficients")
            return fl.pair_from_coefficients(self.delta, self.sigma, xi=self.xi)
        return fl.table_pair(self.family, self.kappa, self.nu, self.xi)


def _complex(p) -> complex:
    if isinstance(p, (list, tuple)):
        if len(p) != 2:
            raise ValueError(f"expected [x, y], got {p!r}")
        return complex(float(p[0]), float(p[1]))
    return complex(p)


_KEYS = {f.name: f for f in fields(RunConfig)}


def load_config(path: str | None) -> dict:
    """Read a TOML (``.toml``) or JSON file into a flat dict of known keys."""
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        if path.endswith(".json"):
            data = json.loads(raw.decode())
        else:
            data = tomllib.loads(raw.decode())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object")
    unknown = sorted(set(data) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    data = load_config(getattr(args, "config", None))
    for name in _KEYS:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    for name, f in _KEYS.items():
        val = getattr(cfg, name)
        if f.type in ("float", "float | None") and isinstance(val, int) and not isinstance(val, bool):
            setattr(cfg, name, float(val))
    return cfg.validate()


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: str, data: str | bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x: float) -> str:
    return repr(float(x))


def trajectory_csv(run: lw.LoewnerRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "path_id", "point_id", "re_w", "im_w", "re_d", "im_d", "alive"])
    d = np.exp(run.logd)
    for k, t in enumerate(run.times):
        for p in range(run.w.shape[1]):
            for j in range(run.w.shape[2]):
                x, dd = run.w[k, p, j], d[k, p, j]
                w.writerow([_num(t), p, j, _num(x.real), _num(x.imag), _num(dd.real), _num(dd.imag),
                            int(run.alive[k, p, j])])
    return buf.getvalue()


def trace_svg(points, chart: str, size: int = 480) -> str:
    """Standalone SVG of a polyline in chart coordinates (y axis up)."""
    z = np.asarray(points, dtype=complex)
    z = z[np.isfinite(z)]
    xs, ys = z.real, z.imag
    if chart == geo.DISK:
        lo_x, hi_x, lo_y, hi_y = -1.05, 1.05, -1.05, 1.05
    else:
        lo_x, hi_x = min(xs.min(), -0.5), max(xs.max(), 0.5)
        lo_y, hi_y = min(ys.min(), 0.0), max(ys.max(), 0.5)
        pad = 0.05 * max(hi_x - lo_x, hi_y - lo_y)
        lo_x, hi_x, lo_y, hi_y = lo_x - pad, hi_x + pad, lo_y - pad, hi_y + pad
    span = max(hi_x - lo_x, hi_y - lo_y)

    def px(x, y):
        return (x - lo_x) / span * size, size - (y - lo_y) / span * size

    pts = " ".join("{:.3f},{:.3f}".format(*px(x, y)) for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    if chart == geo.DISK:
        cx, cy = px(0.0, 0.0)
        parts.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{size / span:.3f}" fill="none" stroke="gray"/>')
    else:
        x0, y0 = px(lo_x, 0.0)
        x1, _ = px(hi_x, 0.0)
        parts.append(f'<line x1="{x0:.3f}" y1="{y0:.3f}" x2="{x1:.3f}" y2="{y0:.3f}" stroke="gray"/>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, dry_run: bool = False) -> int:
    pair = cfg.field_pair()
    pts = cfg.point_list()
    record_dt = cfg.record_dt or max(cfg.t_max / 100, cfg.dt)
    plan = {"command": "simulate", "pair": _pair_info(pair), "chart": cfg.chart, "points": pts,
            "t_max": cfg.t_max, "dt": cfg.dt, "n_paths": cfg.n_paths, "record_dt": record_dt,
            "driving": cfg.driving, "scheme": cfg.scheme, "trace": cfg.trace}
    if dry_run:
        print(_json(plan), end="")
        return 0
    driving = lw.DrivingPath("brownian", pair.kappa, cfg.seed) if cfg.driving == "brownian" \
        else lw.DrivingPath("deterministic", pair.kappa)
    run = lw.run_parallel(cfg.threads, pair=pair, chart=cfg.chart, points=pts, t_max=cfg.t_max, dt=cfg.dt,
                          driving=driving, n_paths=cfg.n_paths, scheme=cfg.scheme, record_dt=record_dt)
    atomic_write(os.path.join(cfg.out, "trajectory.csv"), trajectory_csv(run))
    msg = f"simulate: {cfg.n_paths} path(s), {len(pts)} point(s), {len(run.times)} records"
    if cfg.trace:
        grid = np.linspace(0.0, cfg.t_max, cfg.trace_points + 1)
        if cfg.driving == "brownian":
            B = np.interp(grid, run.times, run.B[:, 0])
            tips = lw.trace(pair, grid, np.diff(B))
        else:
            tips = lw.trace(pair, grid)
        if cfg.chart != geo.HALFPLANE:
            tips = geo.from_halfplane(cfg.chart, tips, 0, 0)[0]
        atomic_write(os.path.join(cfg.out, "trace.svg"), trace_svg(tips, cfg.chart))
        msg += ", trace written"
    alive = float(run.final.alive.mean())
    print(f"{msg}; alive fraction {alive:.4f}")
    return 0


def _pair_info(pair: fl.SlitFieldPair) -> dict:
    return {"family": pair.family, "kappa": pair.kappa, "nu": pair.nu, "xi": pair.xi,
            "delta": [float(c) for c in pair.coefficients[0]],
            "sigma": [float(c) for c in pair.coefficients[1]]}


def _grid_cells(cfg: RunConfig) -> list:
    cells = []
    for g in cfg.grid:
        unknown = set(g) - {"family", "kappa", "nu", "xi"}
        if unknown:
            raise ConfigError(f"unknown grid keys: {', '.join(sorted(unknown))}")
        fams = g.get("family", cfg.family)
        fams = fams if isinstance(fams, list) else [fams]
        ks = g.get("kappa", [cfg.kappa])
        ns = g.get("nu", [cfg.nu])
        xs = g.get("xi", [cfg.xi])
        ks, ns, xs = (v if isinstance(v, list) else [v] for v in (ks, ns, xs))
        cells += [(f, float(k), float(n), float(x)) for f in fams for k in ks for n in ns for x in xs]
    return cells


def cmd_check(cfg: RunConfig, dry_run: bool = False) -> int:
    tol = cfg.tol_analytic if cfg.method == "analytic" else cfg.tol_flow
    if cfg.grid:
        cells = _grid_cells(cfg)
        if dry_run:
            print(_json({"command": "check", "kernel": cfg.kernel, "cells": cells, "tol": tol}), end="")
            return 0
        rows = cp.scan_selection(cells, cfg.kernel, cfg.n_sample_points, cfg.method, tol)
        report = {"problem": {"kernel": cfg.kernel, "method": cfg.method, "tol": tol,
                              "n_sample_points": cfg.n_sample_points},
                  "scan": rows}
        atomic_write(os.path.join(cfg.out, "report.json"), _json(report))
        print(cp.verdict_table(rows))
        return 2 if any("error" in r for r in rows) else 0
    pair = cfg.field_pair()
    if dry_run:
        print(_json({"command": "check", "pair": _pair_info(pair), "kernel": cfg.kernel, "tol": tol}), end="")
        return 0
    prob = cp.problem_for(pair, cfg.kernel, cfg.n_sample_points, cfg.seed)
    rep = cp.residual_system(prob, cfg.method, tol)
    d = rep.to_dict()
    report = {
        "problem": {"pair": _pair_info(pair), "kernel": cfg.kernel, "method": cfg.method,
                    "n_sample_points": cfg.n_sample_points, "chart": prob.chart},
        "residuals": {"r1": d["r1_max"], "r2": d["r2_max"], "r3": d["r3_max"], "argmax": d["argmax"]},
        "verdict": d["verdict"],
        "mc": [],
    }
    atomic_write(os.path.join(cfg.out, "report.json"), _json(report))
    print(f"check: r1={rep.r1_max:.3e} r2={rep.r2_max:.3e} r3={rep.r3_max:.3e} -> {d['verdict']}")
    return 0 if rep.verdict else 1


def cmd_mc(cfg: RunConfig, dry_run: bool = False) -> int:
    pair = cfg.field_pair()
    pts = cfg.point_list() if cfg.observable == cp.M1_ETA else cfg.pair_list()
    if dry_run:
        print(_json({"command": "mc", "pair": _pair_info(pair), "observable": cfg.observable,
                     "points": pts, "t": cfg.t_max, "N": cfg.n_paths, "dt": cfg.dt}), end="")
        return 0
    stats = cp.mc_martingale(pair, cfg.observable, pts, cfg.t_max, cfg.n_paths, cfg.dt, cfg.seed,
                             kernel=cfg.kernel, chart=cfg.chart, scheme=cfg.scheme, workers=cfg.threads)
    mc = [{"point": s["point"], "t": s["t"], "N": s["N"], "mean": s["mean"], "stderr": s["stderr"],
           "z": s["z_score"], "M0": s["M0"], "killed_fraction": s["killed_fraction"]} for s in stats]
    report = {"problem": {"pair": _pair_info(pair), "observable": cfg.observable, "chart": cfg.chart,
                          "dt": cfg.dt, "seed": cfg.seed},
              "mc": mc}
    atomic_write(os.path.join(cfg.out, "mc.json"), _json(report))
    for s in mc:
        print(f"mc: point {s['point']} mean={s['mean']:.6f} M0={s['M0']:.6f} se={s['stderr']:.2e} z={s['z']:.2f}")
    return 0


def cmd_sample_gff(cfg: RunConfig, dry_run: bool = False) -> int:
    if not cfg.bumps:
        raise ConfigError("sample-gff needs a non-empty 'bumps' list")
    for b in cfg.bumps:
        unknown = set(b) - {"center", "radius", "weight"}
        if unknown:
            raise ConfigError(f"unknown bump keys: {', '.join(sorted(unknown))}")
    try:
        obs = gff.ObservableSet.from_config(cfg.bumps, cfg.chart)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad bump: {exc}") from exc
    if dry_run:
        print(_json({"command": "sample-gff", "kernel": cfg.kernel, "bumps": cfg.bumps,
                     "N": cfg.n_samples, "n_quad": cfg.n_quad}), end="")
        return 0
    kernel = gff.CovarianceKernel(cfg.kernel)
    eta = None
    if cfg.kernel == gff.DIRICHLET:
        eta = gff.family_eta(cfg.field_pair())
    ens = gff.gff_sample(obs, kernel, eta, cfg.n_samples, cfg.seed, cfg.n_quad)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id"] + [f"f{i}" for i in range(len(obs.bumps))])
    for i, row in enumerate(ens.samples):
        w.writerow([i] + [_num(x) for x in row])
    atomic_write(os.path.join(cfg.out, "gff_samples.csv"), buf.getvalue())
    summary = ens.summary()
    summary["kernel"] = cfg.kernel
    summary["jitter"] = ens.jitter
    atomic_write(os.path.join(cfg.out, "gff_summary.json"), _json(summary))
    print(f"sample-gff: {cfg.n_samples} samples of {len(obs.bumps)} pairings")
    return 0


def cmd_classify(cfg: RunConfig, dry_run: bool = False) -> int:
    pair = cfg.field_pair()
    if dry_run:
        print(_json({"command": "classify", "pair": _pair_info(pair)}), end="")
        return 0
    family, kappa, nu, xi = fl.classify(pair)
    out = {"family": family, "row": fl.FAMILY_ROW.get(family), "kappa": kappa, "nu": nu, "xi": xi}
    atomic_write(os.path.join(cfg.out, "classify.json"), _json(out))
    print(f"classify: {family} kappa={kappa:.6g} nu={nu:.6g} xi={xi:.6g}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "mc": cmd_mc,
    "sample-gff": cmd_sample_gff,
    "classify": cmd_classify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML or JSON file with run parameters")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker processes for path ensembles")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    common.add_argument("--family", choices=list(fl.FAMILIES) + [fl.GENERAL])
    common.add_argument("--kappa", type=float)
    common.add_argument("--nu", type=float)
    common.add_argument("--xi", type=float)
    common.add_argument("--chart", choices=list(geo.CHARTS))
    common.add_argument("--kernel", choices=list(gff.KERNELS))
    common.add_argument("--t-max", dest="t_max", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--n-paths", dest="n_paths", type=int)
    common.add_argument("--n-samples", dest="n_samples", type=int)
    common.add_argument("--scheme", choices=[lw.ITO, lw.STRAT])
    common.add_argument("--method", choices=["analytic", "flow"])
    common.add_argument("--driving", choices=["brownian", "zero"])
    common.add_argument("--observable", choices=[cp.M1_ETA, cp.M2_TWO_POINT])
    common.add_argument("--trace", action="store_true", help="also write the slit trace as SVG")
    p = argparse.ArgumentParser(prog="slitflow", description=__doc__.split("\n\n")[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, dry_run=getattr(args, "dry_run", False))
    except (ArtifactError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any evaluation failure maps to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
