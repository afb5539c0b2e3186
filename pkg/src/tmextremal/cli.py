"""Command-line front end.

Usage: ``tmextremal <command> [flags]`` with command one of bubble, green,
maximize, testfn, threshold, sweep, verify. Settings come from an optional
flat ``section.key = value`` config file; flags override it. The JSON report
goes to ``--out`` or stdout. Exit codes: 0 success, 1 numeric failure,
2 usage or configuration error (no report is written).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .green import (
    BracketError,
    GreenOptions,
    StiffnessError,
    a0_scaling_deviation,
    extract_A0,
    green_outer_data,
    ode_residual,
    solve_green,
)
from .kernel import (
    BubbleProfile,
    ModelParams,
    ParameterError,
    QuadratureError,
    SaturationError,
    bubble_ode_residual,
    carleson_chang_const,
    critical_threshold,
    i_integral_check,
)
from .maximize import SolverOptions, SweepSummary, blowup_diagnostics, maximize_subcritical
from .radial import make_grid, write_profile_csv
from .testfn import bubble_mass, sweep_trends, verify_critical_gap

SCHEMA_VERSION = "1"
COMMANDS = ("bubble", "green", "maximize", "testfn", "threshold", "sweep", "verify")
NUMERIC_ERRORS = (SaturationError, StiffnessError, BracketError, QuadratureError, ArithmeticError)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    dim: int = 2
    beta: float = 0.5
    tau: float = 1.0
    eps: float = 0.1
    rmax: float = 24.0
    nodes: int = 400
    seed: int = 0
    workers: int = 1
    out: str | None = None
    csv: str | None = None
    timing: bool = False
    eps_list: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    tau_list: list = field(default_factory=list)
    max_iter: int = 2000
    tol_rel: float = 1e-9
    window: float = 4.0
    green_r_min: float = 1e-4
    green_r_max: float = 40.0

    def params(self, eps=None) -> ModelParams:
        return ModelParams(self.dim, self.beta, self.tau, self.eps if eps is None else eps)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iter=self.max_iter, tol_rel=self.tol_rel, window=self.window)

    def green_options(self) -> GreenOptions:
        return GreenOptions(r_min=self.green_r_min, r_max=self.green_r_max)

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name not in ("out", "csv", "timing", "workers")}


# config file key -> RunConfig attribute
CONFIG_KEYS = {
    "model.dim": "dim", "model.beta": "beta", "model.tau": "tau", "model.eps": "eps",
    "grid.rmax": "rmax", "grid.nodes": "nodes",
    "solver.max_iter": "max_iter", "solver.tol_rel": "tol_rel", "solver.window": "window",
    "green.r_min": "green_r_min", "green.r_max": "green_r_max",
    "sweep.eps_list": "eps_list", "sweep.tau_list": "tau_list",
    "run.seed": "seed", "run.workers": "workers", "run.out": "out", "run.csv": "csv",
}


def _coerce(attr, text):
    proto = RunConfig.__dataclass_fields__[attr]
    if attr in ("eps_list", "tau_list"):
        return _float_list(text)
    kind = {"dim": int, "nodes": int, "seed": int, "workers": int, "max_iter": int,
            "out": str, "csv": str}.get(attr, float)
    try:
        return kind(text)
    except ValueError as exc:
        raise UsageError(f"bad value for {proto.name}: {text!r}") from exc


def _float_list(text):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list: {text!r}") from exc
    if not vals:
        raise UsageError("empty list")
    return vals


def read_config(path) -> dict:
    """Parse ``section.key = value`` lines; '#' starts a comment."""
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown or malformed entry {line!r}")
        attr = CONFIG_KEYS[key]
        out[attr] = _coerce(attr, val.strip())
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tmextremal", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--dim", type=int)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--tau", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--rmax", type=float)
    ap.add_argument("--nodes", type=int)
    ap.add_argument("--config")
    ap.add_argument("--out")
    ap.add_argument("--csv", help="write the computed profile as CSV")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--eps-list", dest="eps_list", type=_float_list)
    ap.add_argument("--tau-list", dest="tau_list", type=_float_list)
    ap.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reruns)")
    return ap


def parse_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    cfg = RunConfig(command=ns.command)
    if ns.config:
        for k, v in read_config(ns.config).items():
            setattr(cfg, k, v)
    for k, v in vars(ns).items():
        if k in ("command", "config") or v is None or v is False:
            continue
        setattr(cfg, k, v)
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        cfg.params(eps=0.0)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


# --- per-command pipelines (all numbers come from module calls) --------------

def _green_summary(prof, params):
    est = extract_A0(prof)
    outer = green_outer_data(prof, 1.0, params) if prof.r_min < 1.0 < prof.r_max else None
    return {
        "A0": prof.A0, "A0_fit": est.value, "A0_spread": est.spread,
        "A0_monotone": est.monotone, "remainder_C": est.remainder_C,
        "flux_residual": prof.flux_residual, "ode_residual": ode_residual(prof),
        "r_min": prof.r_min, "r_cut": prof.r_cut, "tail_rate": prof.tail_rate,
        "tail_m": prof.tail_m, "shots": prof.shots,
        "outer_at_1": None if outer is None else {
            "G": outer.G, "energy": outer.energy, "weighted_mass": outer.weighted_mass,
            "tail_fraction": outer.tail_fraction, "flagged": outer.flagged},
    }


def cmd_bubble(cfg):
    p = cfg.params(eps=0.0)
    m = bubble_mass(p)
    prof = BubbleProfile(p)
    table = []
    for r in (0.5, 1.0, 2.0):
        for h in (1e-3, 5e-4, 2.5e-4):
            table.append({"r": r, "h": h, "residual": bubble_ode_residual(prof, r, h)})
    quad, closed = i_integral_check(p.N, p.c_N)
    print(f"bubble mass = {m.value:.12f}", file=sys.stderr)
    return {"mass": m.value, "truncated_mass": m.truncated, "tail": m.tail,
            "tail_flagged": m.flagged, "c_N": p.c_N, "ode_residuals": table,
            "I_N": {"quadrature": quad, "closed_form": closed}}, True


def cmd_green(cfg):
    p = cfg.params(eps=0.0)
    prof = solve_green(p, cfg.green_options())
    if cfg.csv:
        prof.to_csv(cfg.csv)
    return _green_summary(prof, p), True


def cmd_threshold(cfg):
    p = cfg.params(eps=0.0)
    prof = solve_green(p, cfg.green_options())
    return {"A0": prof.A0, "threshold": critical_threshold(p, prof.A0),
            "carleson_chang": carleson_chang_const(p.N),
            "carleson_chang_over_1mb": critical_threshold(p, 0.0)}, True


def _solve_point(cfg, eps, seed=None):
    p = cfg.params(eps=eps)
    opts = cfg.solver_options()
    opts.seed = seed
    res = maximize_subcritical(p, make_grid(cfg.rmax, cfg.nodes, cfg.beta), opts)
    diag = blowup_diagnostics(res, p, window=cfg.window) if res.converged else None
    return res, diag


def _maximizer_dict(res, diag):
    out = {"eps": res.params.eps, "Lambda": res.value, "lambda": res.lag, "c_eps": res.c_eps,
           "el_residual": res.el_residual, "iterations": res.iterations,
           "converged": res.converged, "beta_Ne": res.params.beta_Ne}
    if diag is not None:
        out["blowup"] = {"r_eps": diag.r_eps, "bubble_distance": diag.bubble_distance,
                         "ratio": diag.ratio, "window": diag.window}
    return out


def cmd_maximize(cfg):
    res, diag = _solve_point(cfg, cfg.eps)
    if cfg.csv:
        write_profile_csv(cfg.csv, res.u, res.params)
    return _maximizer_dict(res, diag), res.converged


def _testfn_table(cfg):
    p = cfg.params(eps=0.0)
    prof = solve_green(p, cfg.green_options())
    reps = verify_critical_gap(cfg.eps_list, p, prof)
    trends = sweep_trends(reps, p)
    table = [r.as_dict() for r in reps]
    return p, prof, reps, trends, {
        "A0": prof.A0,
        "threshold": critical_threshold(p, prof.A0),
        "table": table,
        "trends": {"expected_rate": trends.expected_rate, "b_rate": trends.b_rate,
                   "c_q_rate": trends.c_q_rate, "rate_within_factor_2": trends.rate_consistent(),
                   "scaled_gap": list(trends.scaled_gap),
                   "all_gaps_positive": trends.all_gaps_positive},
    }


def cmd_testfn(cfg):
    *_, out = _testfn_table(cfg)
    return out, True


def _sweep_eps_worker(args):
    cfg, eps = args
    try:
        res, diag = _solve_point(cfg, eps)
        return {"ok": res.converged, "point": _maximizer_dict(res, diag)}, (res, diag)
    except NUMERIC_ERRORS as exc:
        return {"ok": False, "point": {"eps": eps, "error": f"{type(exc).__name__}: {exc}"}}, None


def _sweep_tau_worker(args):
    cfg, tau = args
    try:
        p = ModelParams(cfg.dim, cfg.beta, tau)
        prof = solve_green(p, cfg.green_options())
        return {"ok": True, "point": {"tau": tau, **_green_summary(prof, p)}}, prof
    except NUMERIC_ERRORS as exc:
        return {"ok": False, "point": {"tau": tau, "error": f"{type(exc).__name__}: {exc}"}}, None


def _map(cfg, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_sweep(cfg):
    if cfg.tau_list:
        outs = _map(cfg, _sweep_tau_worker, [(cfg, t) for t in cfg.tau_list])
        points = [o[0]["point"] for o in outs]
        ok = all(o[0]["ok"] for o in outs)
        result = {"kind": "tau", "points": points}
        profs = [o[1] for o in outs if o[1] is not None]
        if ok and cfg.dim == 2 and any(t == 1.0 for t in cfg.tau_list):
            dev = a0_scaling_deviation(profs)
            result["scaling_law_deviation"] = dev
            result["scaling_law_within_2e-4"] = bool(max(abs(d) for d in dev) < 2e-4)
        return result, ok
    eps_list = sorted(cfg.eps_list, reverse=True)
    if not all(0 < e < 1 - cfg.beta for e in eps_list):
        raise UsageError(f"every eps must lie in (0, {1 - cfg.beta}) for a subcritical sweep")
    outs = _map(cfg, _sweep_eps_worker, [(cfg, e) for e in eps_list])
    points = [o[0]["point"] for o in outs]
    ok = all(o[0]["ok"] for o in outs)
    result = {"kind": "eps", "points": points}
    if ok:
        summ = SweepSummary.from_results([o[1][0] for o in outs], [o[1][1] for o in outs])
        result["trends"] = {"lambda_nondecreasing": summ.lambda_nondecreasing,
                            "bubble_distance_decreasing": summ.distance_decreasing,
                            "ratio_relative_gap": summ.ratio_gap}
    return result, ok


def cmd_verify(cfg):
    p, prof, reps, trends, table = _testfn_table(cfg)
    mass = bubble_mass(p)
    checks = {
        "bubble_mass_unit": abs(mass.value - 1.0) < 1e-6,
        "flux_normalized": prof.flux_residual < 1e-4,
        "norms_unit": all(abs(r.norm - 1.0) < 1e-8 for r in reps),
        "continuity": all(r.jump < 1e-10 for r in reps),
        "gaps_positive": trends.all_gaps_positive,
        "threshold_factorization": (critical_threshold(p, prof.A0) > critical_threshold(p, 0.0)) == (prof.A0 > 0),
    }
    table["green"] = _green_summary(prof, p)
    table["bubble_mass"] = mass.value
    table["checks"] = checks
    return table, all(checks.values())


HANDLERS = {"bubble": cmd_bubble, "green": cmd_green, "maximize": cmd_maximize,
            "testfn": cmd_testfn, "threshold": cmd_threshold, "sweep": cmd_sweep,
            "verify": cmd_verify}


def _finite(obj, path, flagged):
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        flagged.append(path)
        return None
    if isinstance(obj, dict):
        return {k: _finite(v, f"{path}.{k}", flagged) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v, f"{path}[{i}]", flagged) for i, v in enumerate(obj)]
    return obj


def run(argv) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    status, error = "ok", None
    try:
        results, ok = HANDLERS[cfg.command](cfg)
        if not ok:
            status = "numeric_failure"
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        results, status = {}, "numeric_failure"
        error = {"type": type(exc).__name__, "message": str(exc),
                 "radius": getattr(exc, "radius", None)}
    flagged = []
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg.resolved(),
        "status": status,
        "results": _finite(results, "results", flagged),
        "nonfinite": flagged,
        "provenance": {"package_version": __version__,
                       "grid": {"R_max": cfg.rmax, "M": cfg.nodes},
                       "solver": {"max_iter": cfg.max_iter, "tol_rel": cfg.tol_rel},
                       "green": {"r_min": cfg.green_r_min, "r_max": cfg.green_r_max}},
        "wall_time": round(time.perf_counter() - start, 3) if cfg.timing else None,
    }
    if error:
        report["error"] = error
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if status == "ok" else 1


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
