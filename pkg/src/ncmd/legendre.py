"""Numerical convex conjugates and contraction-principle infima.

``conjugate`` computes  sup_theta { <theta, x> - Lambda(theta) }  for a
convex Lambda with Lambda(0) = 0 that may be +inf outside an open domain.
The objective is concave, so a monotone ascent (damped Newton when a
Hessian is supplied, BFGS otherwise) from a few starting points finds the
supremum; a line search that is allowed to double its step lets iterates
run off along a ray, and the supremum is declared infinite once the
objective exceeds ``infinity_threshold``.

``contract`` computes  inf { I(x) : U(x) = y }  by a grid search over a
parametrised fiber followed by golden-section (1-D) or zoomed-grid (2-D)
refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

__all__ = [
    "ConjugateProblem",
    "ConjugateResult",
    "ContractionProblem",
    "ContractionResult",
    "NonConvexityError",
    "conjugate",
    "contract",
    "golden_section",
]

MAX_DIM = 6
_ARMIJO = 1e-4


class NonConvexityError(ValueError):
    """The supplied Lambda violated midpoint convexity along a search step."""


@dataclass
class ConjugateProblem:
    """Data for one evaluation of Lambda* at ``x``.

    ``func`` must return +inf (not raise) outside the effective domain.
    ``grad``/``hess`` are optional analytic derivatives of Lambda; without
    ``grad`` central differences are used.
    """

    func: Callable[[np.ndarray], float]
    x: np.ndarray
    domain_radius: float = math.inf
    solver_tol: float = 1e-9
    infinity_threshold: float = 1e12
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    essentially_smooth: Optional[bool] = None
    restarts: int = 8
    seed: int = 0
    max_iter: int = 400
    convexity_tol: float = 1e-7

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.x.ndim != 1:
            raise ValueError("x must be a vector")
        if self.x.size > MAX_DIM:
            raise ValueError(f"conjugates are supported up to dimension {MAX_DIM}")

    @property
    def dim(self):
        return self.x.size


@dataclass(frozen=True)
class ConjugateResult:
    """Value of the conjugate plus the maximiser when one was found.

    ``status`` is one of ``"converged"`` (gradient condition met),
    ``"infinite"`` (objective passed the threshold along a ray),
    ``"stalled"`` (no further progress; value reliable, gradient not small).
    """

    value: float
    theta: Optional[np.ndarray]
    status: str
    grad_residual: float
    iterations: int
    essentially_smooth: Optional[bool] = None

    def __float__(self):
        return float(self.value)

    @property
    def is_infinite(self):
        return math.isinf(self.value)


class _Objective:
    """phi(theta) = <theta, x> - Lambda(theta) with derivative plumbing."""

    def __init__(self, problem: ConjugateProblem):
        self.p = problem
        self.x = problem.x
        self.evals = 0

    def value(self, theta):
        self.evals += 1
        lam = float(self.p.func(theta))
        if math.isnan(lam) or lam == math.inf:
            return -math.inf
        return float(theta @ self.x) - lam

    def _lam(self, theta):
        v = float(self.p.func(theta))
        return math.inf if math.isnan(v) else v

    def grad_lambda(self, theta):
        if self.p.grad is not None:
            return np.asarray(self.p.grad(theta), dtype=float).reshape(self.x.size)
        g = np.empty_like(theta)
        for i in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[i]))
            e = np.zeros_like(theta)
            e[i] = h
            fp, fm = self._lam(theta + e), self._lam(theta - e)
            if math.isfinite(fp) and math.isfinite(fm):
                g[i] = (fp - fm) / (2 * h)
            else:
                f0 = self._lam(theta)
                if math.isfinite(fm):
                    g[i] = (f0 - fm) / h
                elif math.isfinite(fp):
                    g[i] = (fp - f0) / h
                else:
                    g[i] = math.inf
        return g

    def grad(self, theta):
        return self.x - self.grad_lambda(theta)

    def neg_hess(self, theta):
        if self.p.hess is None:
            return None
        return np.asarray(self.p.hess(theta), dtype=float).reshape(self.x.size, self.x.size)


def _ascend(obj: _Objective, theta0, tol):
    p = obj.p
    n = theta0.size
    theta = theta0.astype(float)
    f = obj.value(theta)
    if not math.isfinite(f):
        return None
    g = obj.grad(theta)
    hinv = np.eye(n)
    quiet = 0
    gtol = tol * (1.0 + np.linalg.norm(p.x))
    for it in range(1, p.max_iter + 1):
        gnorm = np.linalg.norm(g)
        if not np.all(np.isfinite(g)):
            return f, theta, "stalled", math.inf, it
        if gnorm <= gtol:
            return f, theta, "converged", gnorm, it
        if f > p.infinity_threshold:
            return math.inf, None, "infinite", gnorm, it
        d = None
        nh = obj.neg_hess(theta)
        if nh is not None:
            try:
                c = np.linalg.cholesky(nh + 1e-14 * max(1.0, np.abs(nh).max()) * np.eye(n))
                d = np.linalg.solve(c.T, np.linalg.solve(c, g))
            except np.linalg.LinAlgError:
                d = None
        if d is None:
            d = hinv @ g
        slope = float(g @ d)
        if not slope > 0 or not np.all(np.isfinite(d)):
            hinv = np.eye(n)
            d = g.copy()
            slope = float(g @ g)

        # backtrack until Armijo holds, or expand while it keeps holding
        alpha = 1.0
        f_new = obj.value(theta + d)
        if f_new >= f + _ARMIJO * slope:
            while alpha < 2.0**80:
                f_try = obj.value(theta + 2 * alpha * d)
                if f_try >= f + _ARMIJO * 2 * alpha * slope and f_try > f_new:
                    alpha *= 2
                    f_new = f_try
                    if f_new > p.infinity_threshold:
                        break
                else:
                    break
        else:
            while alpha > 1e-30:
                alpha *= 0.5
                f_new = obj.value(theta + alpha * d)
                if f_new >= f + _ARMIJO * alpha * slope:
                    break
            else:
                return f, theta, "stalled", gnorm, it
        s = alpha * d
        theta_new = theta + s
        # checked before the divergence test so a concave Lambda cannot pass as +inf
        mid = obj.value(theta + 0.5 * s)
        if mid < 0.5 * (f + f_new) - p.convexity_tol * (1.0 + abs(f) + abs(f_new)):
            raise NonConvexityError(
                f"Lambda is not convex along the segment from {theta} to {theta_new}"
            )
        if f_new > p.infinity_threshold:
            return math.inf, None, "infinite", gnorm, it

        g_new = obj.grad(theta_new)
        y = g - g_new
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) and np.all(np.isfinite(y)):
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)

        if abs(f_new - f) <= 1e-15 * (1.0 + abs(f)):
            quiet += 1
        else:
            quiet = 0
        theta, f, g = theta_new, f_new, g_new
        if quiet >= 4:
            return f, theta, "stalled", np.linalg.norm(g), it
    return f, theta, "stalled", np.linalg.norm(g), p.max_iter


def _starts(problem: ConjugateProblem):
    n = problem.dim
    yield np.zeros(n)
    if problem.restarts <= 0:
        return
    rng = np.random.default_rng(problem.seed)
    radius = min(1.0, 0.5 * problem.domain_radius)
    for _ in range(problem.restarts):
        v = rng.standard_normal(n)
        yield radius * rng.random() ** (1.0 / n) * v / np.linalg.norm(v)


def conjugate(problem: ConjugateProblem) -> ConjugateResult:
    """Lambda*(x) = sup_theta <theta, x> - Lambda(theta).

    Every start is run to completion and the largest value is kept; one
    divergent start makes the answer +inf.
    """
    obj = _Objective(problem)
    lam0 = float(problem.func(np.zeros(problem.dim)))
    if not math.isfinite(lam0) or abs(lam0) > 1e-12:
        raise ValueError(f"Lambda(0) must be 0, got {lam0}")
    best = None
    for theta0 in _starts(problem):
        out = _ascend(obj, theta0, problem.solver_tol)
        if out is None:
            continue
        val, theta, status, resid, its = out
        if status == "infinite":
            return ConjugateResult(math.inf, None, "infinite", resid, its,
                                   problem.essentially_smooth)
        if best is None or val > best[0]:
            best = (val, theta, status, resid, its)
    val, theta, status, resid, its = best
    # phi(0) = 0 so the supremum is never negative
    return ConjugateResult(max(val, 0.0), theta, status, float(resid), its,
                           problem.essentially_smooth)


# ---------------------------------------------------------------- contraction


def golden_section(f, lo, hi, xtol=1e-10, max_iter=200):
    """Minimise a unimodal ``f`` on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fv, xv = min(cands, key=lambda t: t[0])
    return xv, fv


@dataclass
class ContractionProblem:
    """inf { inner_rate(x) : U(x) = y } over x in R^h.

    Either give ``parametrization`` (s in R^d -> a point of the fiber) with
    ``param_dim = d``, or let the fiber be found numerically: the last
    ``h - k`` coordinates are scanned and the first ``k`` solved for by
    least squares (fibers of dimension at most 2 only).  ``in_range`` is an
    optional predicate on ``y``; when it is false the fiber is empty and
    the infimum is +inf without any search.
    """

    inner_rate: Callable[[np.ndarray], float]
    U: Callable[[np.ndarray], np.ndarray]
    y: np.ndarray
    h: int
    parametrization: Optional[Callable[[np.ndarray], np.ndarray]] = None
    param_dim: Optional[int] = None
    box: tuple = (-10.0, 10.0)
    coarse_points: int = 401
    xtol: float = 1e-9
    residual_tol: float = 1e-8
    starts: tuple = field(default_factory=tuple)
    in_range: Optional[Callable[[np.ndarray], bool]] = None

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))

    @property
    def fiber_dim(self):
        if self.parametrization is not None:
            return int(self.param_dim)
        return max(self.h - self.y.size, 0)


@dataclass(frozen=True)
class ContractionResult:
    value: float
    x: Optional[np.ndarray]
    fiber_dim: int

    def __float__(self):
        return float(self.value)


class _Fiber:
    """Maps fiber coordinates s to a point x with U(x) = y (or None)."""

    def __init__(self, prob: ContractionProblem):
        self.prob = prob
        self.k = prob.y.size
        self.d = prob.fiber_dim
        self._warm = None

    def _residual(self, x):
        return np.atleast_1d(np.asarray(self.prob.U(x), dtype=float)) - self.prob.y

    def _solve(self, free):
        """Solve U(x) = y for the solved block given the free block."""
        prob = self.prob
        nsolve = prob.h - free.size

        def full(z):
            return np.concatenate([z, free])

        starts = []
        if self._warm is not None:
            starts.append(self._warm)
        starts.extend(np.asarray(s, dtype=float)[:nsolve] for s in prob.starts)
        starts.append(np.zeros(nsolve))
        for z0 in starts:
            try:
                sol = optimize.least_squares(lambda z: self._residual(full(z)), z0,
                                             xtol=1e-15, ftol=1e-15, gtol=1e-15)
            except ValueError:
                continue
            if np.linalg.norm(sol.fun) <= prob.residual_tol * (1.0 + np.linalg.norm(prob.y)):
                self._warm = sol.x
                return full(sol.x)
        return None

    def point(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.prob.parametrization is not None:
            return np.asarray(self.prob.parametrization(s), dtype=float)
        return self._solve(s)

    def rate(self, s):
        x = self.point(s)
        if x is None:
            return math.inf
        v = float(self.prob.inner_rate(x))
        return math.inf if math.isnan(v) else v


def _grid_1d(fib: _Fiber, prob: ContractionProblem):
    lo, hi = prob.box
    grid = np.linspace(lo, hi, prob.coarse_points)
    vals = np.array([fib.rate(s) for s in grid])
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        return math.inf, None
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    s, v = golden_section(fib.rate, a, b, xtol=prob.xtol)
    if vals[i] < v:
        s, v = grid[i], vals[i]
    return v, np.atleast_1d(s)


def _grid_2d(fib: _Fiber, prob: ContractionProblem):
    lo, hi = prob.box
    m = 41
    centre = np.array([(lo + hi) / 2.0] * 2)
    half = (hi - lo) / 2.0
    best_v, best_s = math.inf, None
    while half > prob.xtol:
        ax = np.linspace(-half, half, m)
        for u in ax:
            for w in ax:
                s = centre + np.array([u, w])
                v = fib.rate(s)
                if v < best_v:
                    best_v, best_s = v, s
        if best_s is None:
            return math.inf, None
        centre = best_s
        half *= 4.0 / (m - 1)
    return best_v, best_s


def contract(problem: ContractionProblem) -> ContractionResult:
    """inf of the inner rate over the fiber U^{-1}(y); +inf for an empty fiber."""
    d = problem.fiber_dim
    if problem.parametrization is None and d > 2:
        raise ValueError(
            f"fiber of dimension {d} needs an explicit parametrization"
        )
    if problem.in_range is not None and not problem.in_range(problem.y):
        return ContractionResult(math.inf, None, d)
    fib = _Fiber(problem)
    if d == 0:
        x = fib.point(np.zeros(0))
        if x is None:
            return ContractionResult(math.inf, None, 0)
        return ContractionResult(float(problem.inner_rate(x)), x, 0)
    if d == 1:
        v, s = _grid_1d(fib, problem)
    elif d == 2:
        v, s = _grid_2d(fib, problem)
    else:
        best = (math.inf, None)
        rng = np.random.default_rng(0)
        lo, hi = problem.box
        for _ in range(8):
            s0 = rng.uniform(lo, hi, d)
            res = optimize.minimize(lambda s: min(fib.rate(s), 1e300), s0, method="Powell")
            if res.fun < best[0]:
                best = (float(res.fun), res.x)
        v, s = best
    if s is None or not math.isfinite(v):
        return ContractionResult(math.inf, None, d)
    return ContractionResult(float(v), fib.point(s), d)
