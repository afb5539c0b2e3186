"""Exact constants and special functions for singular Trudinger-Moser functionals.

Everything here is a pure function of its arguments. The truncated exponential

    zeta(N, s) = e^s - sum_{k=0}^{N-2} s^k / k!

is evaluated by its tail series near the origin and by subtraction elsewhere,
so that zeta(N, s) ~ s^(N-1)/(N-1)! keeps full relative accuracy for small s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

# largest s with exp(s) finite in double precision
LOG_MAX = math.log(np.finfo(float).max)


class ParameterError(ValueError):
    """Invalid model or grid parameters."""


class SaturationError(ArithmeticError):
    """An exponential left the representable floating-point range."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message, value=None, abserr=None):
        super().__init__(message)
        self.value = value
        self.abserr = abserr


def half_gamma(N: int) -> float:
    """Gamma(N/2) from the integer and half-integer closed forms."""
    if N < 1:
        raise ParameterError(f"half_gamma needs N >= 1, got {N}")
    if N % 2 == 0:
        return float(math.factorial(N // 2 - 1))
    # Gamma(m + 1/2) = (2m-1)!! sqrt(pi) / 2^m with m = (N-1)/2
    m = (N - 1) // 2
    dfact = 1
    for j in range(2 * m - 1, 0, -2):
        dfact *= j
    return dfact * math.sqrt(math.pi) / 2**m


def sphere_area(N: int) -> float:
    """Area omega_{N-1} = 2 pi^(N/2) / Gamma(N/2) of the unit sphere in R^N."""
    if int(N) != N or N < 2:
        raise ParameterError(f"sphere_area needs an integer N >= 2, got {N}")
    N = int(N)
    return 2.0 * math.pi ** (N / 2) / half_gamma(N)


def harmonic(n: int) -> float:
    """H_n = 1 + 1/2 + ... + 1/n (H_0 = 0)."""
    return math.fsum(1.0 / k for k in range(1, n + 1))


@dataclass(frozen=True)
class ModelParams:
    """Dimension N, singularity beta, zero-order weight tau and defect eps."""

    N: int
    beta: float
    tau: float
    eps: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ParameterError(f"N must be an integer >= 2, got {self.N}")
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.tau > 0.0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.eps < 1.0 - self.beta:
            raise ParameterError(
                f"eps must lie in [0, 1 - beta) = [0, {1.0 - self.beta}), got {self.eps}"
            )
        object.__setattr__(self, "N", int(self.N))

    @property
    def omega(self) -> float:
        return sphere_area(self.N)

    @property
    def alpha(self) -> float:
        """alpha_N = N omega_{N-1}^{1/(N-1)}."""
        return self.N * self.omega ** (1.0 / (self.N - 1))

    @property
    def beta_Ne(self) -> float:
        """Subcritical exponent alpha_N (1 - beta - eps)."""
        return self.alpha * (1.0 - self.beta - self.eps)

    @property
    def c_N(self) -> float:
        return self.alpha * self.N ** (-self.N / (self.N - 1)) * (1.0 - self.beta) ** (-1.0 / (self.N - 1))

    @property
    def q(self) -> float:
        """Conjugate exponent N/(N-1)."""
        return self.N / (self.N - 1.0)

    def with_eps(self, eps: float) -> "ModelParams":
        return ModelParams(self.N, self.beta, self.tau, eps)

    def as_dict(self) -> dict:
        return {"N": self.N, "beta": self.beta, "tau": self.tau, "eps": self.eps}


def _tail_series(N: int, s: np.ndarray) -> np.ndarray:
    # sum_{k >= N-1} s^k/k!; only called with 0 <= s < N/2, so the ratio s/(k+1) < 1/2
    term = s ** (N - 1) / math.factorial(N - 1)
    total = term.copy()
    k = N - 1
    while True:
        k += 1
        term = term * s / k
        total += term
        if not np.any(term > np.finfo(float).eps * total):
            return total


def zeta(N: int, s):
    """Truncated exponential zeta(N, s) for s >= 0.

    Accepts scalars or arrays. Raises ``SaturationError`` when e^s overflows;
    callers in that regime should use :func:`log_zeta`.
    """
    if int(N) != N or N < 1:
        raise ParameterError(f"zeta needs an integer N >= 1, got {N}")
    N = int(N)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ParameterError("zeta is defined here only for s >= 0")
    if np.any(s_arr > LOG_MAX):
        raise SaturationError(f"zeta({N}, s) overflows for s = {s_arr.max():.6g}")
    out = np.empty_like(s_arr)
    if N == 1:
        out[...] = np.exp(s_arr)
    else:
        small = s_arr < N / 2.0
        if np.any(small):
            out[small] = _tail_series(N, s_arr[small])
        big = ~small
        if np.any(big):
            sb = s_arr[big]
            partial = np.zeros_like(sb)
            term = np.ones_like(sb)
            for k in range(N - 1):
                partial += term
                term = term * sb / (k + 1)
            out[big] = np.exp(sb) - partial
    return out if out.ndim else float(out)


def log_zeta(N: int, s):
    """log zeta(N, s) without overflow, for s > 0 (returns -inf at s = 0)."""
    N = int(N)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ParameterError("log_zeta is defined here only for s >= 0")
    out = np.empty_like(s_arr)
    moderate = s_arr <= 600.0
    if np.any(moderate):
        with np.errstate(divide="ignore"):
            out[moderate] = np.log(zeta(N, s_arr[moderate]))
    big = ~moderate
    if np.any(big):
        sb = s_arr[big]
        # log(e^s - P(s)) = s + log1p(-P(s) e^{-s}), P the Taylor head
        head = np.zeros_like(sb)
        for k in range(N - 1):
            head += np.exp(k * np.log(sb) - math.lgamma(k + 1) - sb)
        out[big] = sb + np.log1p(-head)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BubbleProfile:
    """Closed-form radial bubble phi_N(r) = -(N-1)/(alpha(1-beta)) log(1 + c_N r^a).

    Here a = N(1-beta)/(N-1). The profile vanishes at the origin and decreases
    logarithmically to -infinity.
    """

    params: ModelParams

    @property
    def exponent(self) -> float:
        p = self.params
        return p.N * (1.0 - p.beta) / (p.N - 1)

    @property
    def amplitude(self) -> float:
        p = self.params
        return (p.N - 1) / (p.alpha * (1.0 - p.beta))

    def __call__(self, r):
        return bubble_value(self, r)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        p = self.params
        a = self.exponent
        ra = r**a
        return -self.amplitude * p.c_N * a * r ** (a - 1.0) / (1.0 + p.c_N * ra)


def bubble_value(profile: BubbleProfile, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ParameterError("bubble_value needs r >= 0")
    p = profile.params
    val = -profile.amplitude * np.log1p(p.c_N * r_arr**profile.exponent)
    return val if val.ndim else float(val)


def bubble_ode_residual(profile: BubbleProfile, r: float, h: float) -> float:
    """Centered-difference residual of ((-r phi')^{N-1})' - r^{N-1-N beta} e^{alpha(1-beta) N/(N-1) phi}."""
    if r <= 0 or h <= 0 or r - 2.0 * h <= 0:
        raise ParameterError(f"stencil [r-2h, r+2h] must stay in (0, inf); r={r}, h={h}")
    p = profile.params
    N = p.N
    f = profile

    def flux(x, dphi):
        return (-x * dphi) ** (N - 1)

    d_plus = (f(r + 2 * h) - f(r)) / (2 * h)
    d_minus = (f(r) - f(r - 2 * h)) / (2 * h)
    lhs = (flux(r + h, d_plus) - flux(r - h, d_minus)) / (2 * h)
    rhs = r ** (N - 1 - N * p.beta) * math.exp(p.alpha * (1.0 - p.beta) * p.q * f(r))
    return lhs - rhs


def i_integral_check(N: int, c: float, epsrel: float = 1e-13):
    """(N-1) int_0^inf t^{N-2}/(1+ct)^N dt by adaptive quadrature, next to 1/c^{N-1}.

    The half line is split at t = 1; on [1, inf) the substitution t = 1/x maps the
    integrand to 1/(x + c)^N on (0, 1].
    """
    if N < 2 or c <= 0:
        raise ParameterError(f"need N >= 2 and c > 0, got N={N}, c={c}")
    head, err1, info1 = integrate.quad(
        lambda t: t ** (N - 2) / (1.0 + c * t) ** N, 0.0, 1.0,
        epsabs=0.0, epsrel=epsrel, limit=200, full_output=True)[:3]
    tail, err2, info2 = integrate.quad(
        lambda x: 1.0 / (x + c) ** N, 0.0, 1.0,
        epsabs=0.0, epsrel=epsrel, limit=200, full_output=True)[:3]
    value = (N - 1) * (head + tail)
    abserr = (N - 1) * (err1 + err2)
    if abserr > 1e3 * epsrel * abs(value):
        raise QuadratureError(
            f"I_N quadrature reached only abserr={abserr:.3g}", value=value, abserr=abserr)
    return value, 1.0 / c ** (N - 1)


def carleson_chang_const(N: int) -> float:
    """(omega_{N-1}/N) exp(H_{N-1})."""
    return sphere_area(N) / N * math.exp(harmonic(N - 1))


def critical_threshold(params: ModelParams, A0: float) -> float:
    """(1/(1-beta)) (omega_{N-1}/N) exp(H_{N-1} + alpha_N (1-beta) A0)."""
    if not math.isfinite(A0):
        raise ParameterError(f"A0 must be finite, got {A0}")
    N = params.N
    return (params.omega / N / (1.0 - params.beta)
            * math.exp(harmonic(N - 1) + params.alpha * (1.0 - params.beta) * A0))
