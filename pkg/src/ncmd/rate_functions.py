"""Limit cumulants and the closed-form rate functions that go with them.

Each :class:`LimitCumulant` is a scaled-cumulant limit Lambda; its Legendre
transform is the rate function of the corresponding large or moderate
deviation principle.  Wherever that transform is known in closed form the
formula is implemented here, and ``LimitCumulant.conjugate_problem`` builds
the matching numeric problem so the two can be compared point by point.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .legendre import (
    ConjugateProblem,
    ContractionProblem,
    conjugate,
    contract,
)
from .levy_models import (
    CumulantSpec,
    JumpMixture,
    SubordinatorModel,
    finite_difference_gradient,
)

__all__ = [
    "Family",
    "LimitCumulant",
    "SkewParams",
    "SkewRate",
    "f_nu",
    "h_nu",
    "imm_md_centered_1d",
    "imm_md_explicit_cases",
    "binomial_poisson_rates",
    "gaussian_md_rate",
    "skew_md_rate",
    "skew_map",
    "skew_fiber",
    "logistic_map",
    "logistic_log_ratios",
    "logistic_md_rate",
    "logistic_ld_rate",
    "limit_cumulant_eval",
    "skew_contraction_problem",
    "logistic_contraction_problem",
    "in_open_simplex",
    "contract_rate",
]


class Family(enum.Enum):
    IMM_LD = "imm_ld"
    IMM_MD_CENTERED = "imm_md_centered"
    IMM_MD_DRIFT = "imm_md_drift"
    LEVY_LD = "levy_ld"
    LEVY_MD = "levy_md"
    POISSON_LD = "poisson_ld"
    POISSON_MD = "poisson_md"
    GAUSS_MD = "gauss_md"


def f_nu(y, nu):
    """y**(1/nu) for y >= 0, else 0 (inf passes through)."""
    if y == math.inf:
        return math.inf
    return y ** (1.0 / nu) if y >= 0 else 0.0


def _vec(theta, dim):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise ValueError(f"expected a vector of length {dim}")
    return theta


def _cum_grad(kappa: CumulantSpec, theta):
    if kappa.grad is not None:
        return np.asarray(kappa.grad(theta), dtype=float)
    return finite_difference_gradient(kappa, theta, 1e-6)


class LimitCumulant:
    """A scaled cumulant limit Lambda(theta) from one of eight families.

    Build instances with the classmethod constructors; each stores just the
    parameters its family needs.  ``__call__`` evaluates Lambda, ``grad``
    and ``hess`` give derivatives where they exist in closed form.
    """

    def __init__(self, family: Family, dim: int, **params):
        self.family = family
        self.dim = int(dim)
        self.params = params
        # families with a one-sided kink get random restarts in the solver
        self.kinked = family in (Family.IMM_LD, Family.IMM_MD_DRIFT)

    # ---------------------------------------------------------- constructors

    @classmethod
    def imm_ld(cls, kappa_s: CumulantSpec, nu):
        """f_nu(kappa_S(theta)): reference LDP for S(L_nu(t))/t."""
        _check_nu(nu)
        return cls(Family.IMM_LD, kappa_s.dim, kappa=kappa_s, nu=float(nu))

    @classmethod
    def imm_md(cls, kappa_s: CumulantSpec, nu):
        """Noncentral moderate-deviation limit; centered or drift form from grad kappa_S(0)."""
        _check_nu(nu)
        m = kappa_s.grad0
        if np.any(m):
            return cls.imm_md_drift(m, nu)
        if not np.any(kappa_s.hess0):
            raise ValueError(
                "driver has zero drift and null covariance: S is identically 0 and "
                "no moderate-deviation rate function is defined"
            )
        return cls.imm_md_centered(kappa_s.hess0, nu)

    @classmethod
    def imm_md_centered(cls, Q, nu):
        _check_nu(nu)
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        return cls(Family.IMM_MD_CENTERED, Q.shape[0], Q=Q, nu=float(nu))

    @classmethod
    def imm_md_drift(cls, m, nu):
        _check_nu(nu)
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if not np.any(m):
            raise ValueError("drift vector m must be nonzero")
        return cls(Family.IMM_MD_DRIFT, m.size, m=m, nu=float(nu))

    @classmethod
    def levy_ld(cls, kappa_s: CumulantSpec, clock: SubordinatorModel):
        return cls(Family.LEVY_LD, kappa_s.dim, kappa=kappa_s, clock=clock)

    @classmethod
    def levy_md(cls, kappa_s: CumulantSpec, clock: SubordinatorModel):
        return cls(Family.LEVY_MD, kappa_s.dim, kappa=kappa_s, mean_rate=clock.mean_rate)

    @classmethod
    def poisson_ld(cls, jumps: JumpMixture, p):
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        return cls(Family.POISSON_LD, jumps.dim, jumps=jumps, p=float(p))

    @classmethod
    def poisson_md(cls, jumps: JumpMixture, lam):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        return cls(Family.POISSON_MD, jumps.dim, jumps=jumps, lam=float(lam))

    @classmethod
    def gauss_md(cls, H):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(Family.GAUSS_MD, H.shape[0], H=H)

    # ------------------------------------------------------------ evaluation

    def __call__(self, theta):
        th = _vec(theta, self.dim)
        P = self.params
        fam = self.family
        if fam is Family.IMM_LD:
            return f_nu(P["kappa"](th), P["nu"])
        if fam is Family.IMM_MD_CENTERED:
            q = 0.5 * th @ P["Q"] @ th
            return max(q, 0.0) ** (1.0 / P["nu"])
        if fam is Family.IMM_MD_DRIFT:
            eta = float(th @ P["m"])
            return eta ** (1.0 / P["nu"]) if eta >= 0 else 0.0
        if fam is Family.LEVY_LD:
            k = P["kappa"](th)
            return math.inf if k == math.inf else P["clock"].kappa_scalar(k)
        if fam is Family.LEVY_MD:
            return P["mean_rate"] * P["kappa"](th)
        if fam is Family.POISSON_LD:
            p = P["p"]
            return float(np.logaddexp(math.log1p(-p), math.log(p) + P["jumps"].log_mgf(th)))
        if fam is Family.POISSON_MD:
            g = P["jumps"].mgf(th)
            return P["lam"] * (g - 1.0)
        if fam is Family.GAUSS_MD:
            return 0.5 * float(th @ P["H"] @ th)
        raise AssertionError(fam)

    def grad(self, theta):
        th = _vec(theta, self.dim)
        P = self.params
        fam = self.family
        if fam is Family.IMM_LD:
            k = P["kappa"](th)
            if not k > 0:
                return np.zeros(self.dim)
            nu = P["nu"]
            return (1.0 / nu) * k ** (1.0 / nu - 1.0) * _cum_grad(P["kappa"], th)
        if fam is Family.IMM_MD_CENTERED:
            nu = P["nu"]
            q = 0.5 * th @ P["Q"] @ th
            if q <= 0:
                return np.zeros(self.dim)
            return (1.0 / nu) * q ** (1.0 / nu - 1.0) * (P["Q"] @ th)
        if fam is Family.IMM_MD_DRIFT:
            nu = P["nu"]
            eta = float(th @ P["m"])
            if eta <= 0:
                return np.zeros(self.dim)
            return (1.0 / nu) * eta ** (1.0 / nu - 1.0) * P["m"]
        if fam is Family.LEVY_LD:
            k = P["kappa"](th)
            return P["clock"].kappa_derivative(k) * _cum_grad(P["kappa"], th)
        if fam is Family.LEVY_MD:
            return P["mean_rate"] * _cum_grad(P["kappa"], th)
        if fam is Family.POISSON_LD:
            J, p = P["jumps"], P["p"]
            g = J.mgf(th)
            return p * J.grad_mgf(th) / (1.0 - p + p * g)
        if fam is Family.POISSON_MD:
            return P["lam"] * P["jumps"].grad_mgf(th)
        if fam is Family.GAUSS_MD:
            return P["H"] @ th
        raise AssertionError(fam)

    def hess(self, theta):
        """Closed-form Hessian, or ``None`` where the family has no cheap one."""
        th = _vec(theta, self.dim)
        P = self.params
        fam = self.family
        if fam is Family.GAUSS_MD:
            return P["H"]
        if fam is Family.POISSON_MD:
            return P["lam"] * P["jumps"].hess_mgf(th)
        if fam is Family.POISSON_LD:
            J, p = P["jumps"], P["p"]
            g = J.mgf(th)
            D = 1.0 - p + p * g
            dg = J.grad_mgf(th)
            return p * J.hess_mgf(th) / D - p * p * np.outer(dg, dg) / D**2
        if fam is Family.LEVY_MD and P["kappa"].hess is not None:
            return P["mean_rate"] * np.asarray(P["kappa"].hess(th))
        return None

    @property
    def grad0(self):
        """Gradient at the origin: the unique zero of the rate function."""
        P = self.params
        fam = self.family
        if fam in (Family.IMM_LD, Family.IMM_MD_CENTERED, Family.IMM_MD_DRIFT, Family.GAUSS_MD):
            return np.zeros(self.dim)
        if fam is Family.LEVY_LD:
            return P["clock"].mean_rate * P["kappa"].grad0
        if fam is Family.LEVY_MD:
            return P["mean_rate"] * P["kappa"].grad0
        if fam is Family.POISSON_LD:
            return P["p"] * P["jumps"].mean
        return P["lam"] * P["jumps"].mean

    @property
    def essentially_smooth(self):
        kappa = self.params.get("kappa")
        return True if kappa is None else kappa.essentially_smooth

    def conjugate_problem(self, x, **kw):
        kw.setdefault("restarts", 8 if self.kinked else 0)
        hess = self.hess if self.hess(np.zeros(self.dim)) is not None else None
        return ConjugateProblem(
            func=self,
            x=x,
            grad=self.grad,
            hess=hess,
            essentially_smooth=self.essentially_smooth,
            **kw,
        )

    def rate(self, x, **kw):
        """Numeric Lambda*(x)."""
        return conjugate(self.conjugate_problem(x, **kw)).value

    def __repr__(self):
        return f"LimitCumulant({self.family.value}, dim={self.dim})"


def limit_cumulant_eval(lc: LimitCumulant, theta):
    return lc(theta)


def _check_nu(nu):
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu!r}")


# ---------------------------------------------------------------- inverse-stable clock


def h_nu(x, m, nu):
    """Rate of the drifted 1-D moderate deviations, H_nu(x; m)."""
    if m == 0:
        raise ValueError("m must be nonzero")
    r = x / m
    if r < 0:
        return math.inf
    return (nu ** (nu / (1 - nu)) - nu ** (1 / (1 - nu))) * r ** (1 / (1 - nu))


def imm_md_centered_1d(x, q, nu):
    """Rate of the centered 1-D moderate deviations with variance q."""
    if not q > 0:
        raise ValueError("q must be positive")
    c = nu / 2.0
    return (c ** (nu / (2 - nu)) - c ** (2 / (2 - nu))) * (2.0 * x * x / q) ** (1 / (2 - nu))


def imm_md_explicit_cases(x, m, nu, **conj_kw):
    """Rate for a drifted driver in R^h at ``x``; returns (value, tag, c).

    Tags ``"i"``/``"ii"`` are the sign and support obstructions (value +inf),
    ``"iii"`` the ray x = c m with c >= 0 (value H_nu(c; 1)).  Any other x
    gets tag ``"none"`` and a numeric conjugate; since Lambda only depends
    on <theta, m>, that conjugate is +inf as well.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if not np.any(m):
        raise ValueError("m must be nonzero")
    if np.any(x * m < -1e-12):
        return math.inf, "i", None
    if np.any((m == 0) & (x != 0)):
        return math.inf, "ii", None
    c = float(x @ m) / float(m @ m)
    if c >= 0 and np.linalg.norm(x - c * m) <= 1e-9 * np.linalg.norm(m):
        return h_nu(c, 1.0, nu), "iii", c
    lc = LimitCumulant.imm_md_drift(m, nu)
    return lc.rate(x, **conj_kw), "none", None


# ---------------------------------------------------------------- triangular arrays


def _xlogy(a, b):
    return 0.0 if a == 0 else a * math.log(a / b)


def binomial_poisson_rates(x, p):
    """(I_LD, I_MD) for Bernoulli(p) summands with lambda = p."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if 0.0 <= x <= 1.0:
        ld = _xlogy(x, p) + _xlogy(1.0 - x, 1.0 - p)
    else:
        ld = math.inf
    md = _xlogy(x, p) - x + p if x >= 0 else math.inf
    return ld, md


# ---------------------------------------------------------------- continuous maps


def gaussian_md_rate(x, H):
    """<x, H^{-1} x> / 2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return 0.5 * float(x @ np.linalg.solve(H, x))


@dataclass(frozen=True)
class SkewParams:
    """Psi (order h-1, positive definite) and skewness vector delta in (-1, 1)^(h-1)."""

    psi: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if psi.shape != (delta.size, delta.size):
            raise ValueError("psi must be square of order len(delta)")
        if np.any(np.abs(delta) >= 1):
            raise ValueError("every delta_j must lie in (-1, 1)")
        if not np.allclose(psi, psi.T):
            raise ValueError("psi must be symmetric")
        try:
            np.linalg.cholesky(psi)
        except np.linalg.LinAlgError:
            raise ValueError("psi must be positive definite") from None
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "delta", delta)

    @property
    def h(self):
        return self.delta.size + 1

    @property
    def scale(self):
        return np.sqrt(1.0 - self.delta**2)

    def a(self, y):
        return np.atleast_1d(np.asarray(y, dtype=float)) / self.scale

    @property
    def b(self):
        return self.delta / self.scale

    @property
    def hessian(self):
        """Block-diagonal covariance diag(Psi, 1) of the unmapped vector."""
        H = np.zeros((self.h, self.h))
        H[:-1, :-1] = self.psi
        H[-1, -1] = 1.0
        return H


@dataclass(frozen=True)
class SkewRate:
    value: float
    branch: int
    x_hat: Optional[float]

    def __float__(self):
        return float(self.value)


def skew_md_rate(y, params: SkewParams):
    """Moderate-deviation rate of the skew-normal map; branch 1 when <a, Psi^-1 b> <= 0.

    ``x_hat`` is the minimising last coordinate in branch 2 (0 in branch 1).
    """
    a = params.a(y)
    b = params.b
    ia = np.linalg.solve(params.psi, a)
    aa = float(a @ ia)
    ab = float(b @ ia)
    if ab <= 0:
        return SkewRate(0.5 * aa, 1, 0.0)
    bb = float(b @ np.linalg.solve(params.psi, b))
    return SkewRate(0.5 * (aa - ab * ab / (bb + 1.0)), 2, ab / (bb + 1.0))


def skew_map(x, delta):
    """U_2(x) = (sqrt(1 - delta_j^2) x_j + delta_j |x_h|)_j."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    return np.sqrt(1.0 - delta**2) * x[:-1] + delta * abs(x[-1])


def skew_fiber(y, delta):
    """Parametrisation s -> x of {x : U_2(x) = y} by the last coordinate."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    scale = np.sqrt(1.0 - delta**2)

    def fiber(s):
        xh = float(np.atleast_1d(s)[0])
        return np.concatenate([(y - abs(xh) * delta) / scale, [xh]])

    return fiber


def skew_contraction_problem(y, params: SkewParams, inner_rate=None, **kw):
    """ContractionProblem for the skew map with the explicit fiber parametrisation."""
    if inner_rate is None:
        H = params.hessian
        inner_rate = lambda x: gaussian_md_rate(x, H)  # noqa: E731
    return ContractionProblem(
        inner_rate=inner_rate,
        U=lambda x: skew_map(x, params.delta),
        y=y,
        h=params.h,
        parametrization=skew_fiber(y, params.delta),
        param_dim=1,
        **kw,
    )


def logistic_map(x):
    """U_1: R^h -> open simplex in R^(h+1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.concatenate([x, [0.0]])
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def logistic_log_ratios(y):
    """Inverse of U_1 on the open simplex; None on the boundary or off the simplex."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not in_open_simplex(y):
        return None
    return np.log(y[:-1] / y[-1])


def logistic_md_rate(y, H):
    """Moderate-deviation rate pushed through U_1 for a Gaussian limit with covariance H."""
    x = logistic_log_ratios(y)
    if x is None:
        return math.inf
    return gaussian_md_rate(x, H)


def logistic_ld_rate(y, kappa_star):
    """Reference rate pushed through U_1, given the conjugate ``kappa_star`` of kappa_X."""
    x = logistic_log_ratios(y)
    if x is None:
        return math.inf
    return float(kappa_star(x))


def in_open_simplex(y, tol=1e-12):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return bool(np.all(y > 0) and math.isclose(float(y.sum()), 1.0, abs_tol=tol))


def logistic_contraction_problem(y, inner_rate, h, **kw):
    """Contraction through U_1; the fiber is solved numerically, the range is the open simplex."""
    return ContractionProblem(inner_rate=inner_rate, U=logistic_map, y=y, h=h,
                              in_range=in_open_simplex, **kw)


def contract_rate(problem):
    return contract(problem).value
