"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest
from scipy import special

from conftest import ACCEPTANCE_LINES
from tmextremal.cli import main
from tmextremal.green import a0_scaling_deviation, ode_residual, solve_green
from tmextremal.kernel import ModelParams, critical_threshold, i_integral_check, zeta
from tmextremal.maximize import (
    SolverOptions,
    SweepSummary,
    blowup_diagnostics,
    default_grid,
    functional,
    functional_gradient,
    maximize_subcritical,
)
from tmextremal.radial import (
    RadialFunction,
    desingularize,
    dirichlet_energy,
    make_grid,
    rearrange_decreasing,
    weighted_integral,
)
from tmextremal.testfn import bubble_mass, sweep_trends, verify_critical_gap


def report(n, checks, detail=""):
    """Record the verdict for criterion n; ``checks`` maps sub-check name to bool."""
    failed = [k for k, ok in checks.items() if not ok]
    verdict = "PASS" if not failed else "FAIL"
    line = f"criterion {n}: {verdict}"
    if failed:
        line += f" (failed: {', '.join(failed)})"
    if detail:
        line += f" | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert not failed, line


def test_criterion_1_bubble_mass():
    worst, slowest = 0.0, 0.0
    for N in (2, 3, 4):
        for beta in (0.25, 0.5, 0.75):
            t0 = time.perf_counter()
            m = bubble_mass(ModelParams(N, beta, 1.0)).value
            slowest = max(slowest, time.perf_counter() - t0)
            worst = max(worst, abs(m - 1.0))
    report(1, {"mass": worst < 1e-6, "runtime": slowest < 1.0},
           f"max |mass-1| = {worst:.2e}, slowest case {slowest:.2f}s")


def test_criterion_2_I_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for N in range(2, 7):
        for c in (0.5, 1.0, math.pi):
            q, closed = i_integral_check(N, c)
            worst = max(worst, abs(q - closed) / closed)
    dt = time.perf_counter() - t0
    report(2, {"identity": worst < 1e-10, "runtime": dt < 1.0}, f"max rel err {worst:.2e}, {dt:.2f}s")


def _bessel_A0(tau):
    # G = K0(sqrt(tau) r)/(2 pi); A0 = lim G(r) + log(r)/(2 pi)
    r = 1e-7
    return (special.k0(math.sqrt(tau) * r) + math.log(r)) / (2 * math.pi)


def test_criterion_3_green_oracle():
    t0 = time.perf_counter()
    profs = {tau: solve_green(ModelParams(2, 0.5, tau)) for tau in (0.25, 1.0, 4.0)}
    dt = time.perf_counter() - t0
    e1 = abs(profs[1.0].A0 - _bessel_A0(1.0))
    e4 = abs(profs[4.0].A0 - _bessel_A0(4.0))
    closed1 = (math.log(2) - np.euler_gamma) / (2 * math.pi)
    dev = max(abs(d) for d in a0_scaling_deviation(list(profs.values())))
    report(3, {"A0(1)": e1 < 1e-4 and abs(profs[1.0].A0 - closed1) < 1e-4, "A0(4)": e4 < 1e-4,
               "scaling": dev < 2e-4, "runtime": dt < 10.0},
           f"A0(1)={profs[1.0].A0:.8f} A0(4)={profs[4.0].A0:.8f} scaling dev {dev:.1e}, {dt:.1f}s")


def test_criterion_4_green_3d():
    t0 = time.perf_counter()
    p = ModelParams(3, 0.5, 1.0)
    prof = solve_green(p)
    half = solve_green(p, r_min=prof.r_min / 2)
    double = solve_green(p, r_max=2 * prof.r_max)
    res = ode_residual(prof)
    dt = time.perf_counter() - t0
    d_min, d_max = abs(half.A0 - prof.A0), abs(double.A0 - prof.A0)
    report(4, {"ode": res < 1e-6, "flux": prof.flux_residual < 1e-4,
               "r_min": d_min < 1e-4, "r_max": d_max < 1e-4, "runtime": dt < 30.0},
           f"A0={prof.A0:.9f} residual {res:.1e} shifts {d_min:.1e}/{d_max:.1e}, {dt:.1f}s")


def test_criterion_5_desingularization():
    t0 = time.perf_counter()
    caps = [lambda r: 0.6 * (1 - r**2), lambda r: 0.5 * np.cos(np.pi * r / 2), lambda r: 0.8 * (1 - r) ** 3]
    worst_e = worst_f = 0.0
    for N in (2, 3):
        p = ModelParams(N, 0.5, 1.0, 0.0)
        g = make_grid(1.0, 800, p.beta)
        for cap in caps:
            w = RadialFunction(g, cap(g.nodes))
            v = desingularize(w, p)
            worst_e = max(worst_e, abs(dirichlet_energy(v, N) / dirichlet_energy(w, N) - 1))
            reg = weighted_integral(lambda r, x: zeta(N, p.alpha * np.abs(x) ** p.q), v, N - 1, N)
            worst_f = max(worst_f, abs(functional(w, p) * (1 - p.beta) / reg - 1))
    dt = time.perf_counter() - t0
    report(5, {"energy": worst_e < 1e-6, "functional": worst_f < 1e-6, "runtime": dt < 5.0},
           f"energy {worst_e:.1e}, functional {worst_f:.1e}, {dt:.2f}s")


def test_criterion_6_inequalities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = dict(Lp=0, ep=0, tzeta=0, HL=0, PS=0)
    for _ in range(200):
        N = int(rng.integers(2, 7))
        t = rng.uniform(0, 30)
        p = rng.uniform(1, 8)
        a = rng.uniform(0, 50)
        if p * t <= 600 and zeta(N, t) ** p > zeta(N, p * t) * (1 + 1e-12):
            bad["Lp"] += 1
        if p * a <= 600 and math.expm1(a) ** p > math.expm1(p * a) * (1 + 1e-12):
            bad["ep"] += 1
        if N >= 3 and t * zeta(N - 1, t) < zeta(N, t) * (1 - 1e-13):
            bad["tzeta"] += 1
    for _ in range(200):
        N = int(rng.integers(2, 4))
        beta = float(rng.choice([0.25, 0.5, 0.75]))
        prm = ModelParams(N, beta, 1.0, 0.1 * (1 - beta))
        g = make_grid(6.0, 120, beta)
        r = g.nodes
        v = sum(rng.uniform(0.1, 1) * np.exp(-rng.uniform(1, 8) * (r - rng.uniform(0, 5)) ** 2)
                for _ in range(int(rng.integers(1, 4))))
        v = 0.5 * v / v.max()
        v -= v[-1]
        u = RadialFunction(g, v)
        ur = rearrange_decreasing(u, N)
        if functional(ur, prm) < functional(u, prm) * (1 - 1e-6):
            bad["HL"] += 1
        if dirichlet_energy(ur, N) > dirichlet_energy(u, N) * (1 + 1e-6):
            bad["PS"] += 1
    dt = time.perf_counter() - t0
    checks = {k: n == 0 for k, n in bad.items()}
    checks["runtime"] = dt < 30.0
    report(6, checks, f"violations {bad}, {dt:.1f}s")


@pytest.fixture(scope="module")
def sweep7():
    t0 = time.perf_counter()
    results = []
    for eps in (0.4, 0.3, 0.2, 0.1):
        p = ModelParams(2, 0.5, 1.0, eps)
        results.append(maximize_subcritical(p, default_grid(p)))
    return results, time.perf_counter() - t0


def test_criterion_7_subcritical_solver(sweep7):
    results, dt = sweep7
    vals = [r.value for r in results]
    t0 = time.perf_counter()
    spread = 0.0
    fd_err = 0.0
    rng = np.random.default_rng(5)
    for res in results:
        p, g = res.params, res.u.grid
        starts = [maximize_subcritical(p, g, SolverOptions(seed=s)).value for s in (1, 2, 3)]
        spread = max(spread, (max(starts + [res.value]) - min(starts + [res.value])) / res.value)
        grad = functional_gradient(res.u, p)
        for _ in range(3):
            d = rng.standard_normal(g.nodes.size)
            h = 1e-6
            fd = (functional(res.u.with_values(res.u.values + h * d), p)
                  - functional(res.u.with_values(res.u.values - h * d), p)) / (2 * h)
            fd_err = max(fd_err, abs(fd - grad @ d) / abs(fd))
    dt += time.perf_counter() - t0
    report(7, {
        "monotone": all(b >= a for a, b in zip(vals, vals[1:])),
        "converged": all(r.converged for r in results),
        "el_residual": all(r.el_residual < 1e-5 for r in results),
        "lagrange": all(r.lag * r.params.beta_Ne >= r.value for r in results),
        "multistart": spread < 1e-4,
        "gradient": fd_err < 1e-6,
        "runtime": dt < 300.0,
    }, f"Lambda {[round(v, 4) for v in vals]}, max EL {max(r.el_residual for r in results):.1e}, "
       f"multistart {spread:.1e}, FD {fd_err:.1e}, {dt:.1f}s")


def test_criterion_8_critical_gap(green_2d):
    t0 = time.perf_counter()
    p = ModelParams(2, 0.5, 1.0)
    reps = verify_critical_gap([1e-2, 1e-3, 1e-4], p, green_2d)
    tr = sweep_trends(reps, p)
    dt = time.perf_counter() - t0
    b_dev = [abs(x) for x in tr.b_deviation]
    c_dev = [abs(x) for x in tr.c_q_deviation]
    report(8, {
        "norm": all(abs(r.norm - 1) < 1e-8 for r in reps),
        "gap_positive": tr.all_gaps_positive,
        "b_converges": b_dev[0] > b_dev[1] > b_dev[2],
        "c_converges": c_dev[0] > c_dev[1] > c_dev[2],
        "rate_factor_2": tr.rate_consistent(2.0),
        "runtime": dt < 120.0,
    }, f"gaps {[round(r.gap, 3) for r in reps]}, rates b {tr.b_rate:.2f} c {tr.c_q_rate:.2f} "
       f"vs {tr.expected_rate:.2f}, {dt:.1f}s")


def test_criterion_9_blowup_trend(sweep7):
    results, _ = sweep7
    diags = [blowup_diagnostics(r, r.params) for r in results]
    s = SweepSummary.from_results(results, diags, slack=0.10)
    report(9, {"distance_decreasing": s.distance_decreasing, "ratio_25pct": s.ratio_gap < 0.25},
           f"distances {[round(d, 3) for d in s.bubble_distances]}, "
           f"ratio {diags[-1].ratio:.3f} vs Lambda {results[-1].value:.3f} (gap {s.ratio_gap:.2f})")


def test_criterion_10_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    ca = main(["verify", "--seed", "0", "--out", str(a)])
    cb = main(["verify", "--seed", "0", "--out", str(b)])
    same = a.read_bytes() == b.read_bytes()
    report(10, {"exit_ok": ca == cb == 0, "byte_identical": same}, f"{a.stat().st_size} bytes")
