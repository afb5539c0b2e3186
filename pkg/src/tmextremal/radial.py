"""Graded radial meshes, singular-weight quadrature, the (1, tau) norm and rearrangement.

Profiles are continuous and piecewise linear in the coordinate s = r^(1-beta).
In that coordinate the singular measure r^(N-1-N beta) dr becomes
s^(N-1) ds / (1-beta), so a fixed Gauss rule per s-cell integrates it without
special treatment of the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import ModelParams, ParameterError, SaturationError, sphere_area, LOG_MAX

GAUSS_POINTS = 4
_GX, _GW = np.polynomial.legendre.leggauss(GAUSS_POINTS)
# reference nodes/weights on [0, 1]
_GX01 = 0.5 * (_GX + 1.0)
_GW01 = 0.5 * _GW


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii r_0 = 0 < ... < r_M, uniform in s = r^(1-beta)."""

    nodes: np.ndarray
    beta: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 17:
            raise ParameterError("a radial grid needs at least 16 cells")
        if nodes[0] != 0.0:
            raise ParameterError("the first grid node must be exactly 0")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("grid nodes must be strictly increasing")
        if not 0.0 <= self.beta < 1.0:
            raise ParameterError(f"grid exponent beta must lie in [0, 1), got {self.beta}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        s = nodes ** (1.0 - self.beta)
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def M(self) -> int:
        """Number of cells."""
        return self.nodes.size - 1

    @property
    def R_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def power(self) -> float:
        """p with r = s^p."""
        return 1.0 / (1.0 - self.beta)

    def quadrature(self):
        """Gauss points (s, r) and s-weights, each of shape (M, GAUSS_POINTS)."""
        cached = self.__dict__.get("_quad")
        if cached is None:
            ds = np.diff(self.s)[:, None]
            sq = self.s[:-1, None] + ds * _GX01[None, :]
            wq = ds * _GW01[None, :]
            rq = sq**self.power
            cached = (sq, rq, wq)
            object.__setattr__(self, "_quad", cached)
        return cached

    def interpolate(self, values, r):
        """Piecewise-linear-in-s interpolation of node values at radii r."""
        s = np.asarray(r, dtype=float) ** (1.0 - self.beta)
        return np.interp(s, self.s, values)


def make_grid(R_max: float, M: int, beta: float) -> RadialGrid:
    """Grid with r_i = s_i^(1/(1-beta)), s uniform on [0, R_max^(1-beta)]."""
    if not R_max > 0:
        raise ParameterError(f"R_max must be positive, got {R_max}")
    if int(M) != M or M < 16:
        raise ParameterError(f"M must be an integer >= 16, got {M}")
    if not 0.0 <= beta < 1.0:
        raise ParameterError(f"beta must lie in [0, 1), got {beta}")
    s_max = R_max ** (1.0 - beta)
    s = s_max * np.arange(M + 1) / M
    nodes = s ** (1.0 / (1.0 - beta))
    nodes[-1] = R_max
    return RadialGrid(nodes, beta)


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Node values of a radial profile on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray
    decreasing: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.nodes.shape:
            raise ParameterError(
                f"expected {self.grid.nodes.size} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("profile values must be finite")
        if self.decreasing and np.any(np.diff(vals) > 0):
            raise ParameterError("profile flagged decreasing but values increase")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, r):
        return self.grid.interpolate(self.values, r)

    def with_values(self, values, decreasing: bool = False) -> "RadialFunction":
        return RadialFunction(self.grid, values, decreasing)

    def scaled(self, c: float) -> "RadialFunction":
        return RadialFunction(self.grid, c * self.values, self.decreasing and c >= 0)

    def at_gauss(self):
        """Values and s-derivatives at the Gauss points, shapes (M, GAUSS_POINTS)."""
        v = self.values
        dv = np.diff(v)
        uq = v[:-1, None] + dv[:, None] * _GX01[None, :]
        du_ds = (dv / np.diff(self.grid.s))[:, None] * np.ones(GAUSS_POINTS)
        return uq, du_ds

    @property
    def is_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) <= 0))


def _weight_in_s(grid: RadialGrid, sq: np.ndarray, weight_exponent: float) -> np.ndarray:
    # r^k dr = p s^(p k + p - 1) ds
    p = grid.power
    return p * sq ** (p * weight_exponent + p - 1.0)


def radial_quadrature(f, grid: RadialGrid, weight_exponent: float, N: int) -> float:
    """omega_{N-1} int_0^R_max f(r) r^k dr with k = weight_exponent > -1."""
    if weight_exponent <= -1.0:
        raise ParameterError(f"r^{weight_exponent} is not integrable at the origin")
    sq, rq, wq = grid.quadrature()
    vals = np.asarray(f(rq), dtype=float)
    return sphere_area(N) * float(np.sum(wq * _weight_in_s(grid, sq, weight_exponent) * vals))


def weighted_integral(f, u: RadialFunction, weight_exponent: float, N: int) -> float:
    """omega_{N-1} int_0^R_max f(r, u(r)) r^k dr, 4-point Gauss per s-cell."""
    if weight_exponent <= -1.0:
        raise ParameterError(f"r^{weight_exponent} is not integrable at the origin")
    sq, rq, wq = u.grid.quadrature()
    uq, _ = u.at_gauss()
    vals = np.asarray(f(rq, uq), dtype=float)
    return sphere_area(N) * float(np.sum(wq * _weight_in_s(u.grid, sq, weight_exponent) * vals))


def _log_sum(logv, N):
    m = np.max(logv)
    if not np.isfinite(m):
        return 0.0
    total = math.log(sphere_area(N)) + m + math.log(np.sum(np.exp(logv - m)))
    if total > LOG_MAX:
        raise SaturationError(f"weighted integral overflows (log value {total:.4g})")
    return math.exp(total)


def radial_log_quadrature(log_f, grid: RadialGrid, weight_exponent: float, N: int) -> float:
    """omega_{N-1} int exp(log_f(r)) r^k dr with one shared max-shift."""
    if weight_exponent <= -1.0:
        raise ParameterError(f"r^{weight_exponent} is not integrable at the origin")
    sq, rq, wq = grid.quadrature()
    with np.errstate(divide="ignore"):
        logw = np.log(wq * _weight_in_s(grid, sq, weight_exponent))
    return _log_sum(np.asarray(log_f(rq), dtype=float) + logw, N)


def weighted_log_integral(log_f, u: RadialFunction, weight_exponent: float, N: int) -> float:
    """Like :func:`weighted_integral` for an integrand given by its logarithm.

    The integrand is assembled as exp(log f + log weight - m) with one shared
    shift m, so huge exponents survive as long as the integral itself is finite.
    """
    if weight_exponent <= -1.0:
        raise ParameterError(f"r^{weight_exponent} is not integrable at the origin")
    sq, rq, wq = u.grid.quadrature()
    uq, _ = u.at_gauss()
    with np.errstate(divide="ignore"):
        logw = np.log(wq * _weight_in_s(u.grid, sq, weight_exponent))
    return _log_sum(np.asarray(log_f(rq, uq), dtype=float) + logw, N)


def dirichlet_energy(u: RadialFunction, N: int) -> float:
    """omega_{N-1} int |u'|^N r^(N-1) dr, exact for piecewise-linear-in-s data."""
    g = u.grid
    # |u_r|^N r^(N-1) dr = (1-beta)^(N-1) |u_s|^N s^(N-1) ds
    sq, _, wq = g.quadrature()
    _, du = u.at_gauss()
    return sphere_area(N) * (1.0 - g.beta) ** (N - 1) * float(np.sum(wq * np.abs(du) ** N * sq ** (N - 1)))


def lp_integral(u: RadialFunction, p: float, N: int) -> float:
    """omega_{N-1} int |u|^p r^(N-1) dr."""
    return weighted_integral(lambda r, v: np.abs(v) ** p, u, N - 1, N)


def sobolev_norm(u: RadialFunction, params: ModelParams) -> float:
    """(int |grad u|^N + tau |u|^N dx)^(1/N) for the radial profile u."""
    N = params.N
    return (dirichlet_energy(u, N) + params.tau * lp_integral(u, N, N)) ** (1.0 / N)


# --- decreasing rearrangement ------------------------------------------------

def _ball_volume(r, N):
    return sphere_area(N) / N * np.asarray(r, dtype=float) ** N


def distribution_function(u: RadialFunction, t, N: int) -> np.ndarray:
    """mu(t) = |{|u| > t}| under omega r^(N-1) dr, exact for the s-linear interpolant of |u|."""
    g = u.grid
    v = np.abs(u.values)
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    a, b = v[:-1][None, :], v[1:][None, :]
    s0, s1 = g.s[:-1][None, :], g.s[1:][None, :]
    diff = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(diff != 0, (t - a) / diff, 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    cross = s0 + frac * (s1 - s0)
    # portion of each cell where the interpolant exceeds t
    lo = np.where(diff < 0, s0, np.where(diff > 0, cross, s0))
    hi = np.where(diff < 0, cross, np.where(diff > 0, s1, s1))
    flat_in = (diff == 0) & (a > t)
    flat_out = (diff == 0) & (a <= t)
    lo = np.where(flat_out, s0, lo)
    hi = np.where(flat_out, s0, np.where(flat_in, s1, hi))
    p = g.power
    vol = sphere_area(N) / N * (hi ** (p * N) - lo ** (p * N))
    return np.sum(vol, axis=1)


def rearrange_decreasing(u: RadialFunction, N: int, iterations: int = 64) -> RadialFunction:
    """Schwarz rearrangement of |u|, resampled on the same grid.

    Node i receives the level t with mu(t) = |B_{r_i}|, found by bisection on
    the exact distribution function of the interpolant. Non-increasing
    nonnegative input is returned unchanged.
    """
    v = np.abs(u.values)
    if np.all(np.diff(v) <= 0):
        return RadialFunction(u.grid, v, decreasing=True)
    g = u.grid
    target = _ball_volume(g.nodes, N)
    lo = np.full(v.size, v.min())
    hi = np.full(v.size, v.max())
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = distribution_function(u, mid, N) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out = 0.5 * (lo + hi)
    out[0] = v.max()
    out = np.minimum.accumulate(out)
    return RadialFunction(g, out, decreasing=True)


# --- change of variables s = r^(1-beta) ------------------------------------

def desingularize(w: RadialFunction, params: ModelParams, tol: float = 1e-12) -> RadialFunction:
    """v(|x|) = (1-beta)^((N-1)/N) w(|x|^(1/(1-beta))) on B_{R^(1-beta)}.

    The output lives on the uniform grid s_i = r_i^(1-beta), where the
    piecewise-linear-in-s input becomes piecewise linear in |x|. Dirichlet
    N-energy is preserved and singular functionals of w equal 1/(1-beta)
    times the regular functionals of v.
    """
    if abs(w.values[-1]) > tol * max(1.0, float(np.max(np.abs(w.values)))):
        raise ParameterError(f"desingularize needs w(R) = 0, got {w.values[-1]:.3g}")
    if not math.isclose(w.grid.beta, params.beta, rel_tol=0, abs_tol=1e-15):
        raise ParameterError("profile grid must be graded with the model's beta")
    N, beta = params.N, params.beta
    s_nodes = np.array(w.grid.s)
    s_nodes[0] = 0.0
    grid = RadialGrid(s_nodes, 0.0)
    scale = (1.0 - beta) ** ((N - 1) / N)
    return RadialFunction(grid, scale * w.values, w.decreasing)


# --- CSV profile exchange ------------------------------------------------------

def write_profile_csv(path, u: RadialFunction, params: ModelParams) -> None:
    """Two-column (r, value) CSV with a '# header' metadata line."""
    g = u.grid
    lines = [
        f"# N={params.N} beta={params.beta!r} tau={params.tau!r} "
        f"R_max={g.R_max!r} M={g.M} grid_beta={g.beta!r}",
        "r,value",
    ]
    lines += [f"{r!r},{v!r}" for r, v in zip(g.nodes.tolist(), u.values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_profile_csv(path):
    """Inverse of :func:`write_profile_csv`; returns (RadialFunction, header dict)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("#"):
        raise ParameterError(f"{path}: missing '# header' line")
    header = {}
    for item in text[0][1:].split():
        key, _, val = item.partition("=")
        header[key] = int(val) if key in ("N", "M") else float(val)
    rows = [line.split(",") for line in text[2:] if line.strip()]
    r = np.array([float(a) for a, _ in rows])
    v = np.array([float(b) for _, b in rows])
    grid = RadialGrid(r, header.get("grid_beta", header["beta"]))
    return RadialFunction(grid, v, decreasing=bool(np.all(np.diff(v) <= 0))), header
