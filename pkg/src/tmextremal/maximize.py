"""Subcritical maximization of the singular Trudinger-Moser functional.

On a graded grid the functional

    F(u) = omega int zeta(N, beta_Ne |u|^(N/(N-1))) r^(N-1-N beta) dr

is maximized over radial profiles with ||u||_{1,tau} = 1 and u(R_max) = 0.
Each step moves toward the Riesz representative d = K(u)^{-1} grad F, where
K(u) is the tridiagonal form with u^T K(u) u = ||u||^N (exact for N = 2,
lagged diffusivity for N >= 3), then rearranges and renormalizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .kernel import LOG_MAX, BubbleProfile, ModelParams, ParameterError, SaturationError, sphere_area, zeta
from .radial import (
    RadialFunction,
    RadialGrid,
    _GX01,
    make_grid,
    rearrange_decreasing,
    sobolev_norm,
)


@dataclass
class SolverOptions:
    max_iter: int = 2000
    tol_rel: float = 1e-9
    stall_window: int = 5
    max_halvings: int = 40
    seed: int | None = None
    window: float = 4.0


@dataclass(frozen=True, eq=False)
class MaximizerResult:
    u: RadialFunction
    params: ModelParams
    value: float  # Lambda_eps
    lag: float  # lambda_eps
    c_eps: float
    el_residual: float
    iterations: int
    converged: bool
    history: tuple = ()

    @property
    def lam(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class BlowupDiagnostics:
    r_eps: float
    rescaled_profile: RadialFunction
    bubble_distance: float
    ratio: float
    window: float


# --- quadrature-level building blocks ----------------------------------------

def _singular_weights(grid: RadialGrid, N: int):
    # omega * w * r^(N-1-N beta) dr/ds = omega * w * p s^(N-1)
    sq, _, wq = grid.quadrature()
    return sphere_area(N) * wq * grid.power * sq ** (N - 1)


def _values_at_gauss(v):
    dv = np.diff(v)
    return v[:-1, None] + dv[:, None] * _GX01[None, :]


def _zeta_arg(uq, params):
    return params.beta_Ne * np.abs(uq) ** params.q


def functional(u: RadialFunction, params: ModelParams) -> float:
    """omega int zeta(N, beta_Ne |u|^(N/(N-1))) r^(N-1-N beta) dr on [0, R_max]."""
    _check_grid(u.grid, params)
    W = _singular_weights(u.grid, params.N)
    s = _zeta_arg(_values_at_gauss(u.values), params)
    if np.any(s > LOG_MAX):
        raise SaturationError(f"zeta argument {s.max():.4g} overflows; eps too small for this grid")
    return float(np.sum(W * zeta(params.N, s)))


def _el_source(u: RadialFunction, params: ModelParams) -> np.ndarray:
    """b_i = <u^(1/(N-1)) zeta(N-1, beta_Ne u^(N/(N-1))) |x|^(-N beta), phi_i>."""
    N = params.N
    W = _singular_weights(u.grid, N)
    uq = _values_at_gauss(u.values)
    s = _zeta_arg(uq, params)
    if np.any(s > LOG_MAX):
        raise SaturationError(f"zeta argument {s.max():.4g} overflows; eps too small for this grid")
    dens = W * np.sign(uq) * np.abs(uq) ** (1.0 / (N - 1)) * zeta(N - 1, s)
    out = np.zeros(u.values.size)
    out[:-1] += np.sum(dens * (1.0 - _GX01), axis=1)
    out[1:] += np.sum(dens * _GX01, axis=1)
    return out


def functional_gradient(u: RadialFunction, params: ModelParams) -> np.ndarray:
    """Node-wise gradient of :func:`functional` with respect to the node values."""
    return params.beta_Ne * params.q * _el_source(u, params)


def norm_form(u: RadialFunction, params: ModelParams, floor: float = 0.0):
    """Tridiagonal K(u) in banded storage (3, M+1) with u^T K(u) u = ||u||_{1,tau}^N.

    For N = 2 the form does not depend on u. For N >= 3 the coefficients
    |u'|^(N-2) and |u|^(N-2) are frozen at u; ``floor`` is added to both to
    keep the matrix definite where u or u' vanish.
    """
    g = u.grid
    N, tau = params.N, params.tau
    om = sphere_area(N)
    sq, _, wq = g.quadrature()
    ds = np.diff(g.s)
    v = u.values
    du = (np.diff(v) / ds)[:, None]
    uq = _values_at_gauss(v)
    p = g.power
    if N == 2:
        kd = np.ones_like(sq)
        km = np.ones_like(sq)
    else:
        kd = np.abs(du) ** (N - 2) + floor
        km = np.abs(uq) ** (N - 2) + floor
    # stiffness per cell: omega (1-beta)^(N-1) sum w k s^(N-1) / ds^2
    stiff = om * (1.0 - g.beta) ** (N - 1) * np.sum(wq * kd * sq ** (N - 1), axis=1) / ds**2
    mw = om * tau * wq * p * sq ** (p * N - 1) * km
    phi0, phi1 = 1.0 - _GX01, _GX01
    m00 = np.sum(mw * phi0 * phi0, axis=1)
    m01 = np.sum(mw * phi0 * phi1, axis=1)
    m11 = np.sum(mw * phi1 * phi1, axis=1)
    n = v.size
    ab = np.zeros((3, n))
    ab[1, :-1] += stiff + m00
    ab[1, 1:] += stiff + m11
    ab[0, 1:] += -stiff + m01  # super-diagonal
    ab[2, :-1] += -stiff + m01  # sub-diagonal
    return ab


def _banded_matvec(ab, x):
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def _check_grid(grid: RadialGrid, params: ModelParams):
    if not math.isclose(grid.beta, params.beta, rel_tol=0.0, abs_tol=1e-15):
        raise ParameterError(f"grid graded for beta={grid.beta}, params have beta={params.beta}")


def normalize(u: RadialFunction, params: ModelParams) -> RadialFunction:
    n = sobolev_norm(u, params)
    if n == 0:
        raise ParameterError("cannot normalize the zero profile")
    return RadialFunction(u.grid, u.values / n, u.decreasing)


def el_residual(u: RadialFunction, lag: float, params: ModelParams) -> float:
    """max_i |a(u; phi_i) - b(u; phi_i)/lag| / ||phi_i||_{1,tau} over interior hat functions.

    a is the weak N-Laplacian plus zero-order term and b the singular source;
    the boundary node carries the Dirichlet condition and is excluded.
    """
    if not lag > 0:
        raise ParameterError(f"lag must be positive, got {lag}")
    ab = norm_form(u, params)
    a = _banded_matvec(ab, u.values)
    b = _el_source(u, params)
    return float(np.max(np.abs(a - b / lag)[:-1] / hat_norms(u.grid, params)[:-1]))


def hat_norms(grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """||phi_i||_{1,tau} of the nodal hat functions."""
    N, tau = params.N, params.tau
    om = sphere_area(N)
    sq, _, wq = grid.quadrature()
    ds = np.diff(grid.s)
    p = grid.power
    dcell = om * (1.0 - grid.beta) ** (N - 1) * np.sum(wq * sq ** (N - 1), axis=1) / ds**N
    mw = om * tau * wq * p * sq ** (p * N - 1)
    left = np.sum(mw * (1.0 - _GX01) ** N, axis=1)
    right = np.sum(mw * _GX01**N, axis=1)
    tot = np.zeros(grid.nodes.size)
    tot[:-1] += dcell + left
    tot[1:] += dcell + right
    return tot ** (1.0 / N)


def lagrange_normalizer(u: RadialFunction, params: ModelParams) -> float:
    """lambda = int u^(N/(N-1)) zeta(N-1, beta_Ne u^(N/(N-1))) |x|^(-N beta) dx."""
    return float(np.dot(u.values, _el_source(u, params)))


# --- solver ------------------------------------------------------------------

def _riesz_direction(u: RadialFunction, grad: np.ndarray, params: ModelParams) -> np.ndarray:
    floor = 0.0 if params.N == 2 else 1e-12 * max(1.0, float(np.max(np.abs(u.values))))
    ab = norm_form(u, params, floor)
    d = np.zeros_like(grad)
    # Dirichlet condition at R_max: drop the last node
    d[:-1] = solve_banded((1, 1), ab[:, :-1], grad[:-1])
    return d


def initial_profile(grid: RadialGrid, params: ModelParams, seed=None) -> RadialFunction:
    """Decreasing unit-norm start: exp(-r) cut off at R_max, or a random decreasing profile."""
    r = grid.nodes
    if seed is None:
        v = np.exp(-np.sqrt(params.tau) * r) - math.exp(-math.sqrt(params.tau) * grid.R_max)
    else:
        rng = np.random.default_rng(seed)
        inc = rng.exponential(size=r.size - 1) * np.exp(-rng.uniform(0.5, 2.0) * r[1:])
        v = np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
    v[-1] = 0.0
    return normalize(RadialFunction(grid, v, decreasing=True), params)


def _project(values, grid, params):
    v = np.maximum(values, 0.0)
    v[-1] = 0.0
    u = rearrange_decreasing(RadialFunction(grid, v), params.N)
    return normalize(u, params)


def maximize_subcritical(params: ModelParams, grid: RadialGrid, opts: SolverOptions | None = None,
                         u0: RadialFunction | None = None) -> MaximizerResult:
    """Projected ascent on the unit sphere of ||.||_{1,tau} within the decreasing cone."""
    if not params.eps > 0:
        raise ParameterError("maximize_subcritical needs eps > 0")
    return _ascend(params, grid, opts or SolverOptions(), u0)


def critical_estimate(params: ModelParams, grid: RadialGrid, opts: SolverOptions | None = None,
                      u0: RadialFunction | None = None) -> MaximizerResult:
    """Same ascent at the critical exponent (eps = 0) on a fixed grid.

    On a finite grid the critical functional is bounded and attained, so the
    result is a grid-level lower estimate of the critical supremum.
    """
    return _ascend(params.with_eps(0.0), grid, opts or SolverOptions(), u0)


def _ascend(params, grid, opts, u0):
    _check_grid(grid, params)
    u = u0 if u0 is not None else initial_profile(grid, params, opts.seed)
    u = _project(u.values, grid, params)
    F = functional(u, params)
    history = [F]
    quiet = 0
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = functional_gradient(u, params)
        d = _riesz_direction(u, grad, params)
        dn = sobolev_norm(RadialFunction(grid, d), params)
        target = d / dn
        theta = 1.0
        accepted = None
        for _ in range(opts.max_halvings + 1):
            cand = _project((1.0 - theta) * u.values + theta * target, grid, params)
            Fc = functional(cand, params)
            if Fc >= F:
                accepted = (cand, Fc)
                break
            theta *= 0.5
        if accepted is None:
            # no ascent left at floating-point resolution
            converged = True
            break
        u, F_new = accepted
        gain = (F_new - F) / F
        F = F_new
        history.append(F)
        quiet = quiet + 1 if gain < opts.tol_rel else 0
        if quiet >= opts.stall_window:
            converged = True
            break
    lag = lagrange_normalizer(u, params)
    res = el_residual(u, lag, params)
    return MaximizerResult(u=u, params=params, value=F, lag=lag, c_eps=float(u.values[0]),
                           el_residual=res, iterations=it, converged=converged,
                           history=tuple(history))


def blowup_diagnostics(result: MaximizerResult, params: ModelParams, window: float = 4.0,
                       samples: int = 200) -> BlowupDiagnostics:
    """Concentration scale, rescaled profile and its distance to the bubble on [0, window]."""
    if not result.converged:
        raise ParameterError("blow-up diagnostics need a converged maximizer")
    N, beta = params.N, params.beta
    c, lag = result.c_eps, result.lag
    cq = c ** params.q
    r_eps = lag ** (1.0 / N) * c ** (-1.0 / (N - 1)) * math.exp(-params.beta_Ne * cq / N)
    scale = r_eps ** (1.0 / (1.0 - beta))
    if scale * window > result.u.grid.R_max:
        raise ParameterError(
            f"window {window} maps to radius {scale * window:.4g} beyond R_max={result.u.grid.R_max}")
    wgrid = make_grid(window, samples, beta)
    x = wgrid.nodes
    phi = c ** (1.0 / (N - 1)) * (result.u(scale * x) - c)
    prof = RadialFunction(wgrid, phi, decreasing=bool(np.all(np.diff(phi) <= 0)))
    dist = float(np.max(np.abs(phi - BubbleProfile(params)(x))))
    return BlowupDiagnostics(r_eps=r_eps, rescaled_profile=prof, bubble_distance=dist,
                             ratio=lag / cq, window=window)


def default_grid(params: ModelParams, R_max: float = 24.0, M: int = 400) -> RadialGrid:
    return make_grid(R_max, M, params.beta)


@dataclass(frozen=True)
class SweepSummary:
    """Trend flags along a decreasing eps sweep."""

    values: tuple
    lambda_nondecreasing: bool
    bubble_distances: tuple
    distance_decreasing: bool
    ratio_gap: float  # |ratio - Lambda| / Lambda at the smallest eps

    @classmethod
    def from_results(cls, results, diagnostics, slack: float = 0.10):
        vals = tuple(r.value for r in results)
        dist = tuple(d.bubble_distance for d in diagnostics)
        mono = all(b >= a for a, b in zip(vals, vals[1:]))
        dec = all(b <= a * (1.0 + slack) for a, b in zip(dist, dist[1:]))
        last_r, last_d = results[-1], diagnostics[-1]
        return cls(vals, mono, dist, dec, abs(last_d.ratio - last_r.value) / last_r.value)
