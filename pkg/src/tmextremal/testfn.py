"""Bubble normalization and the concentrating test-function family.

For a defect eps the family is built from R = (-log eps)^(1/(1-beta)) and
rho = R eps. With B(r) the bubble evaluated at r/eps, the unnormalized profile

    Psi(r) = G(rho) + B(r) - B(rho)   (r <= rho),      Psi(r) = G(r)   (r > rho)

is continuous at rho, and phi_eps = c^(-1/(N-1)) Psi. Matching this to the
form c + c^(-1/(N-1)) (B(r) + b) on the inner ball gives

    c^(N/(N-1)) = ||Psi||^N,      b = G(rho) - B(rho) - c^(N/(N-1)),

so both constants follow exactly from one norm evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .green import GreenProfile, _log_panels, green_outer_data, green_singular_mass
from .kernel import (
    BubbleProfile,
    ModelParams,
    ParameterError,
    QuadratureError,
    critical_threshold,
    harmonic,
    log_zeta,
    sphere_area,
    zeta,
)
from .radial import make_grid, radial_log_quadrature, radial_quadrature


@dataclass(frozen=True)
class BubbleMass:
    value: float
    truncated: float
    tail: float
    tail_fraction: float
    flagged: bool


def bubble_tail(params: ModelParams, R_max: float) -> float:
    """Mass of the bubble density outside B_{R_max}, in closed form.

    The truncated mass is (T/(1+T))^(N-1) with T = c_N R_max^a.
    """
    T = params.c_N * R_max ** BubbleProfile(params).exponent
    return -math.expm1((params.N - 1) * -math.log1p(1.0 / T))


def bubble_mass(params: ModelParams, R_max: float = 1e3, M: int = 4000) -> BubbleMass:
    """omega int_0^inf r^(N-1-N beta) (1 + c_N r^a)^(-N) dr.

    The ball B_{R_max} is integrated on a graded grid; the exterior is added
    from its closed form. ``flagged`` marks a tail above 5 % of the total.
    """
    if R_max <= 0:
        raise ParameterError(f"R_max must be positive, got {R_max}")
    N, beta = params.N, params.beta
    a = BubbleProfile(params).exponent
    grid = make_grid(R_max, M, beta)
    inner = radial_quadrature(lambda r: (1.0 + params.c_N * r**a) ** (-N), grid, N - 1 - N * beta, N)
    tail = bubble_tail(params, R_max)
    total = inner + tail
    frac = tail / total
    return BubbleMass(total, inner, tail, frac, bool(frac > 0.05))


def inner_dirichlet_closed_form(params: ModelParams, R: float) -> float:
    """int_{B_R} |grad phi_N|^N dx = (N-1)/(alpha(1-beta)) [log(1+T) - sum_k (T/(1+T))^k / k]."""
    N = params.N
    T = params.c_N * R ** BubbleProfile(params).exponent
    x = T / (1.0 + T)
    amp = (N - 1) / (params.alpha * (1.0 - params.beta))
    return amp * (math.log1p(T) - math.fsum(x**k / k for k in range(1, N)))


def inner_dirichlet_quadrature(params: ModelParams, R: float) -> float:
    """Same quantity by adaptive quadrature in the variable T = c_N r^a."""
    N = params.N
    bub = BubbleProfile(params)
    a, amp = bub.exponent, bub.amplitude
    T_max = params.c_N * R**a
    # |phi'|^N r^(N-1) dr = amp^N a^(N-1) T^(N-1) (1+T)^(-N) dT
    val, err = integrate.quad(lambda T: T ** (N - 1) / (1.0 + T) ** N, 0.0, T_max,
                              epsabs=0.0, epsrel=1e-13, limit=400)
    if err > 1e-10 * abs(val):
        raise QuadratureError("inner Dirichlet quadrature did not converge", val, err)
    return params.omega * amp**N * a ** (N - 1) * val


@dataclass(frozen=True)
class TestFunctionReport:
    eps: float
    R: float
    rho: float
    b: float
    c: float
    c_q: float
    norm: float
    J: float
    J_inner: float
    J_outer: float
    threshold: float
    gap: float
    jump: float
    asymptotic_b: float
    asymptotic_c_q: float
    predicted_correction: float = float("nan")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def asymptotic_b(params: ModelParams) -> float:
    N = params.N
    return (N - 1) / (params.alpha * (1.0 - params.beta)) * harmonic(N - 1)


def asymptotic_c_q(params: ModelParams, eps: float, A0: float) -> float:
    """Leading-order c^(N/(N-1)) of the normalized family."""
    N, al, beta = params.N, params.alpha, params.beta
    k = al * (1.0 - beta)
    return (-(N / al) * math.log(eps) + A0 - (N - 1) / k * harmonic(N - 1)
            + math.log(params.omega / (N * (1.0 - beta))) / k)


def build_test_function(eps: float, params: ModelParams, green: GreenProfile,
                        M: int = 2000) -> TestFunctionReport:
    """Assemble phi_eps, solve c and b exactly and evaluate the critical functional."""
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if green.N != params.N or green.params.tau != params.tau:
        raise ParameterError("green profile solved at different (N, tau)")
    N, beta, tau = params.N, params.beta, params.tau
    q = params.q
    om = params.omega
    R = (-math.log(eps)) ** (1.0 / (1.0 - beta))
    rho = R * eps
    if not green.r_min < rho < green.r_cut:
        raise ParameterError(
            f"R eps = {rho:.4g} outside the resolved Green range ({green.r_min}, {green.r_cut:.4g})")
    bub = BubbleProfile(params)
    G_rho = float(green(rho))
    B_R = float(bub(R))

    def psi_inner(y):
        return G_rho + bub(y) - B_R

    dir_cf = inner_dirichlet_closed_form(params, R)
    dir_q = inner_dirichlet_quadrature(params, R)
    lp_in, err = integrate.quad(lambda y: abs(psi_inner(y)) ** N * y ** (N - 1), 0.0, R,
                                epsabs=0.0, epsrel=1e-13, limit=400)
    lp_in *= om * eps**N
    outer = green_outer_data(green, rho, params)
    c_q = dir_cf + tau * lp_in + outer.energy
    c = c_q ** ((N - 1) / N)
    scale = c ** (-1.0 / (N - 1))
    b = G_rho - B_R - c_q
    norm = scale * (dir_q + tau * lp_in + outer.energy) ** (1.0 / N)

    inner_edge = c + scale * (B_R + b)
    jump = abs(inner_edge - scale * G_rho)

    k = params.alpha * (1.0 - beta)
    w_exp = N - 1 - N * beta
    grid = make_grid(R, M, beta)

    def log_inner(y):
        arg = k * (scale * np.maximum(psi_inner(y), 0.0)) ** q
        return log_zeta(N, arg) + N * (1.0 - beta) * math.log(eps)

    J_in = radial_log_quadrature(log_inner, grid, w_exp, N)

    tq, wq = _log_panels(green, rho)
    rq = np.exp(tq)
    arg = k * (scale * green._Gs(tq)) ** q
    J_out = om * float(np.sum(wq * zeta(N, arg) * rq ** (w_exp + 1.0)))
    tail, _ = integrate.quad(lambda s: zeta(N, k * (scale * green.tail(s)) ** q) * s**w_exp,
                             green.r_cut, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    J_out += om * tail
    J = J_in + J_out
    thr = critical_threshold(params.with_eps(0.0), green.A0)
    return TestFunctionReport(
        eps=eps, R=R, rho=rho, b=b, c=c, c_q=c_q, norm=norm, J=J, J_inner=J_in,
        J_outer=J_out, threshold=thr, gap=J - thr, jump=jump,
        asymptotic_b=asymptotic_b(params),
        asymptotic_c_q=asymptotic_c_q(params, eps, green.A0))


def predicted_correction(params: ModelParams, c_q: float, singular_mass: float) -> float:
    """(alpha(1-beta))^(N-1) / ((N-1)! c^(N/(N-1))) int G^N |x|^(-N beta) dx."""
    N = params.N
    return (params.alpha * (1.0 - params.beta)) ** (N - 1) / (math.factorial(N - 1) * c_q) * singular_mass


def verify_critical_gap(eps_list, params: ModelParams, green: GreenProfile, M: int = 2000):
    """Reports for a decreasing eps sweep with the predicted gap correction attached."""
    eps_list = list(eps_list)
    if not eps_list:
        raise ParameterError("eps_list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("eps_list must be strictly decreasing")
    mass = green_singular_mass(green, params.beta)
    out = []
    for eps in eps_list:
        rep = build_test_function(eps, params, green, M)
        corr = predicted_correction(params, rep.c_q, mass)
        out.append(TestFunctionReport(**{**rep.as_dict(), "predicted_correction": corr}))
    return out


def _loglog_slope(x, y):
    x, y = np.log(np.asarray(x)), np.log(np.abs(np.asarray(y)))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class SweepTrends:
    """Convergence rates of a test-function sweep against log R."""

    expected_rate: float
    b_rate: float
    c_q_rate: float
    b_deviation: tuple
    c_q_deviation: tuple
    scaled_gap: tuple
    all_gaps_positive: bool

    def rate_consistent(self, factor: float = 2.0) -> bool:
        lo, hi = self.expected_rate * factor, self.expected_rate / factor
        return all(lo <= r <= hi for r in (self.b_rate, self.c_q_rate))


def sweep_trends(reports, params: ModelParams) -> SweepTrends:
    """Fit |solved - asymptote| ~ R^rate for b and c^(N/(N-1)).

    The expected rate is -N(1-beta)/(N-1).
    """
    R = [r.R for r in reports]
    db = [r.b - r.asymptotic_b for r in reports]
    dc = [r.c_q - r.asymptotic_c_q for r in reports]
    expected = -BubbleProfile(params).exponent
    return SweepTrends(
        expected_rate=expected,
        b_rate=_loglog_slope(R, db),
        c_q_rate=_loglog_slope(R, dc),
        b_deviation=tuple(db),
        c_q_deviation=tuple(dc),
        scaled_gap=tuple(r.gap * r.c_q for r in reports),
        all_gaps_positive=all(r.gap > 0 for r in reports),
    )
