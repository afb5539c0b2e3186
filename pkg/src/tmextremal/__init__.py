"""Numerical toolkit for singular Trudinger-Moser functionals on R^N."""
from .kernel import (
    BubbleProfile,
    ModelParams,
    ParameterError,
    QuadratureError,
    SaturationError,
    bubble_ode_residual,
    bubble_value,
    carleson_chang_const,
    critical_threshold,
    harmonic,
    i_integral_check,
    log_zeta,
    sphere_area,
    zeta,
)
from .radial import (
    RadialFunction,
    RadialGrid,
    desingularize,
    make_grid,
    rearrange_decreasing,
    sobolev_norm,
    weighted_integral,
)

__version__ = "0.1.0"
