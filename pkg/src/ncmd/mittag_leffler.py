"""One-parameter Mittag-Leffler function on the real line.

    E_nu(x) = sum_{k>=0} x**k / Gamma(nu*k + 1),    0 < nu < 1.

Small arguments are summed directly.  Everywhere else the Hankel-contour
representation is collapsed onto the negative real axis, which for real x
gives

    E_nu(x) = 1{x > 0} exp(x**(1/nu)) / nu - (x sin(pi nu) / pi) J(x),

    J(x) = (1/nu) int_0^inf exp(-u**(1/nu)) du / (u**2 - 2 x u cos(pi nu) + x**2).

The integrand is smooth and positive, so there is no cancellation for
negative x (where the power series loses every digit) and the exponential
factor can be kept out of the quadrature for positive x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, special

__all__ = [
    "MLParams",
    "MittagLefflerConvergenceError",
    "ml_eval",
    "ml_log_eval",
    "ml_series",
]

# exp(-u**(1/nu)) underflows to zero past this exponent
_TAIL_EXPONENT = 745.0


class MittagLefflerConvergenceError(ArithmeticError):
    """Raised when the power series does not reach its tolerance."""


@dataclass(frozen=True)
class MLParams:
    """Evaluation controls for :func:`ml_eval` and :func:`ml_log_eval`.

    ``series_radius`` bounds |x| for which the power series is used;
    ``asymptotic_switch`` is the point above which ``ml_log_eval`` uses the
    exponential asymptotic with its first algebraic correction.
    """

    nu: float
    series_tol: float = 1e-14
    max_terms: int = 2000
    asymptotic_switch: float = 30.0
    series_radius: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.nu < 1.0):
            raise ValueError(f"nu must lie in (0, 1), got {self.nu!r}")
        if not self.series_tol > 0:
            raise ValueError("series_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not self.asymptotic_switch > self.series_radius:
            raise ValueError("asymptotic_switch must exceed series_radius")


def _params(nu, params):
    if params is None:
        return MLParams(nu=float(nu))
    if params.nu != nu:
        raise ValueError("nu and params.nu disagree")
    return params


def ml_series(nu, x, series_tol=1e-14, max_terms=2000):
    """Direct power series with exactly-rounded accumulation (``math.fsum``).

    Only sensible for moderate |x|; for negative x the terms cancel.
    """
    if x == 0:
        return 1.0
    logx = math.log(abs(x))
    sign = -1.0 if x < 0 else 1.0
    terms = [1.0]
    small = 0
    for k in range(1, max_terms + 1):
        term = math.exp(k * logx - special.gammaln(nu * k + 1.0))
        if sign < 0 and k % 2:
            term = -term
        terms.append(term)
        # terms are eventually decreasing once Gamma outgrows x**k
        if abs(term) <= series_tol * abs(math.fsum(terms)) and nu * k > 1.0:
            small += 1
            if small >= 2:
                return math.fsum(terms)
        else:
            small = 0
    raise MittagLefflerConvergenceError(
        f"series for E_{nu}({x}) not converged after {max_terms} terms"
    )


def _hankel_integral(nu, x):
    """J(x) from the module docstring, x != 0."""
    c = math.cos(math.pi * nu)
    upper = _TAIL_EXPONENT**nu
    inv = 1.0 / nu

    def integrand(u):
        return math.exp(-(u**inv)) / ((u - x * c) ** 2 + (x * x) * (1.0 - c * c))

    # the denominator is smallest at u = x cos(pi nu), width ~ |x| sin(pi nu)
    peak = x * c
    points = []
    if 0.0 < peak < upper:
        width = abs(x) * math.sin(math.pi * nu)
        points = sorted({p for p in (peak - width, peak, peak + width) if 0.0 < p < upper})
    value, _ = integrate.quad(
        integrand, 0.0, upper, points=points or None, epsabs=0.0, epsrel=1e-13, limit=500
    )
    return value / nu


def _log_correction(nu, x):
    """log of (x sin(pi nu)/pi) J(x) for x > 0."""
    return math.log(x * math.sin(math.pi * nu) / math.pi) + math.log(_hankel_integral(nu, x))


def ml_log_eval(nu, x, params=None):
    """Natural logarithm of E_nu(x).

    Safe for arguments where E_nu itself overflows.  Above
    ``params.asymptotic_switch`` the value is
    ``x**(1/nu) - log(nu) - nu exp(-x**(1/nu)) / (Gamma(1-nu) x)``.
    """
    p = _params(nu, params)
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if x == 0.0:
        return 0.0
    if abs(x) <= p.series_radius:
        return math.log(ml_series(p.nu, x, p.series_tol, p.max_terms))
    if x < 0.0:
        return math.log(-x * math.sin(math.pi * p.nu) / math.pi) + math.log(
            _hankel_integral(p.nu, x)
        )
    lead = x ** (1.0 / p.nu) - math.log(p.nu)
    if x > p.asymptotic_switch:
        return _log_asymptotic(p.nu, x)
    # E = exp(lead) * (1 - nu exp(-x^(1/nu)) * corr)
    ratio = math.exp(math.log(p.nu) - x ** (1.0 / p.nu) + _log_correction(p.nu, x))
    return lead + math.log1p(-ratio)


def _log_asymptotic(nu, x):
    z = x ** (1.0 / nu)
    return z - math.log(nu) - nu * math.exp(-z) / (special.gamma(1.0 - nu) * x)


def ml_eval(nu, x, params=None):
    """E_nu(x) for real x.

    Returns ``inf`` once the value exceeds the double range; use
    :func:`ml_log_eval` there.
    """
    p = _params(nu, params)
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if abs(x) <= p.series_radius:
        return ml_series(p.nu, x, p.series_tol, p.max_terms)
    if x < 0.0:
        return -x * math.sin(math.pi * p.nu) / math.pi * _hankel_integral(p.nu, x)
    z = x ** (1.0 / p.nu)
    if z - math.log(p.nu) > 709.0:
        return math.inf
    corr = x * math.sin(math.pi * p.nu) / math.pi * _hankel_integral(p.nu, x)
    return math.exp(z) / p.nu - corr
