"""Verification harness: scaled-cumulant limits, weak convergence, tail decay.

Three kinds of check, each a small record plus a ``run_*`` function that
returns a report with the raw numbers and a PASS/FAIL verdict:

* :class:`ScgfLimitCheck` compares a prelimit (1/v) log MGF, evaluated
  exactly from model formulas, with its limit over a horizon schedule;
* :class:`WeakConvergenceCheck` compares an empirical MGF with a target
  transform in units of its standard error;
* :class:`TailDecayCheck` measures (1/v_n) log P(B_n >= c) by exact
  Binomial enumeration or exponentially tilted Monte Carlo.

The ``*_check`` builders assemble the checks used throughout the package.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .legendre import ConjugateProblem, conjugate
from .levy_models import (
    CumulantSpec,
    JumpMixture,
    LevyModel,
    SubordinatorModel,
    TriangularSummandModel,
    chunked,
    rng_stream,
)
from .mittag_leffler import ml_eval, ml_log_eval
from .random_time import (
    InverseStableModel,
    ScalingRegime,
    alpha_nu,
    sample_time_changed,
)
from .rate_functions import LimitCumulant, binomial_poisson_rates, logistic_map

__all__ = [
    "ScgfLimitCheck",
    "ScgfReport",
    "run_scgf_check",
    "WeakConvergenceCheck",
    "WeakReport",
    "run_weak_convergence",
    "TailDecayCheck",
    "TailReport",
    "run_tail_decay",
    "binomial_log_tail",
    "binomial_tail_sum_check",
    "default_tilt",
    "tilted_tail_probability",
    "run_checks",
    "imm_scgf_check",
    "levy_scgf_check",
    "poisson_scgf_check",
    "imm_weak_check",
    "levy_weak_check",
    "poisson_weak_check",
    "skew_weak_check",
    "logistic_weak_check",
    "gauss_hermite_mgf",
    "skew_normal_mgf",
    "binomial_tail_check",
    "tilted_tail_check",
]


def _decreasing(errors, window=3):
    tail = list(errors[-window:])
    return all(b <= a for a, b in zip(tail, tail[1:]))


def _grid(grid, dim=None):
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None] if dim in (None, 1) else g[None, :]
    return g


# ------------------------------------------------------------ SCGF limits


@dataclass
class ScgfLimitCheck:
    """Deterministic check that ``prelimit(horizon, theta)`` tends to ``limit(theta)``.

    ``tolerance`` applies at the last horizon; ``note`` records how it was
    calibrated when the convergence is slow.
    """

    prelimit: Callable[[float, np.ndarray], float]
    limit: Callable[[np.ndarray], float]
    grid: np.ndarray
    horizons: Sequence[float]
    tolerance: float = 1e-3
    label: str = "scgf"
    note: str = ""

    def __post_init__(self):
        self.grid = _grid(self.grid)
        h = list(self.horizons)
        if not h or any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("horizons must be a nonempty increasing sequence")


@dataclass
class ScgfReport:
    label: str
    horizons: list
    errors: list
    rows: list
    tolerance: float
    decreasing: bool
    passed: bool
    note: str = ""

    @property
    def final_error(self):
        return self.errors[-1]

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


def run_scgf_check(check: ScgfLimitCheck) -> ScgfReport:
    """Evaluate prelimit and limit on the grid at every horizon.

    Raises ``ValueError`` if a prelimit value is not finite, which means
    the grid leaves the domain of the model.
    """
    limits = [float(check.limit(th)) for th in check.grid]
    errors, rows = [], []
    for hz in check.horizons:
        worst = 0.0
        for th, lim in zip(check.grid, limits):
            pre = float(check.prelimit(hz, th))
            if not math.isfinite(pre):
                raise ValueError(f"prelimit not finite at horizon {hz}, theta {th.tolist()}")
            err = abs(pre - lim)
            worst = max(worst, err)
            rows.append((hz, *th.tolist(), pre, lim, err))
        errors.append(worst)
    dec = _decreasing(errors)
    return ScgfReport(
        label=check.label,
        horizons=list(check.horizons),
        errors=errors,
        rows=rows,
        tolerance=check.tolerance,
        decreasing=dec,
        passed=bool(errors[-1] <= check.tolerance and dec),
        note=check.note,
    )


def imm_scgf_check(kappa_s: CumulantSpec, nu, scaling: ScalingRegime, grid, horizons,
                   tolerance=2e-2, note=""):
    """a_t log E_nu(kappa_S(theta / (a_t t)**(1 - alpha)) t**nu) against its limit.

    With a_t = 1/t the limit is f_nu(kappa_S); in the moderate regime it is
    the centered or drift moderate-deviation limit, chosen from grad kappa_S(0).
    """
    alpha = alpha_nu(nu, kappa_s.grad0)

    def prelimit(t, theta):
        a = scaling.a(t)
        arg = kappa_s(theta / (a * t) ** (1.0 - alpha)) * t**nu
        return a * ml_log_eval(nu, arg)

    if scaling.family == "inverse":
        limit = LimitCumulant.imm_ld(kappa_s, nu)
    elif scaling.is_moderate:
        limit = LimitCumulant.imm_md(kappa_s, nu)
    else:
        raise ValueError("SCGF checks need the inverse or a moderate power scaling")
    return ScgfLimitCheck(prelimit, limit, grid, horizons, tolerance, f"imm-{scaling.family}", note)


def levy_scgf_check(kappa_s: CumulantSpec, clock: SubordinatorModel, scaling: ScalingRegime,
                    grid, horizons, tolerance=1e-3, note=""):
    """a_t t kappa_V(kappa_S(theta) / (t a_t)) against kappa_V(kappa_S) or kappa_V'(0) kappa_S."""

    def prelimit(t, theta):
        a = scaling.a(t)
        return a * t * clock.kappa_scalar(kappa_s(theta) / (t * a))

    if scaling.family == "inverse":
        limit = LimitCumulant.levy_ld(kappa_s, clock)
    elif scaling.is_moderate:
        limit = LimitCumulant.levy_md(kappa_s, clock)
    else:
        raise ValueError("SCGF checks need the inverse or a moderate power scaling")
    return ScgfLimitCheck(prelimit, limit, grid, horizons, tolerance, f"levy-{scaling.family}", note)


def poisson_scgf_check(jumps: JumpMixture, lam, beta, grid, horizons, tolerance=1e-6, note=""):
    """n a_n log(1 + p_n (G - 1)) with p_n = lam / (n a_n), a_n = n**-beta, against lam (G - 1).

    The gap is lam**2 (G - 1)**2 / (2 n a_n) to leading order.
    """

    def prelimit(n, theta):
        a = n ** (-beta)
        p = lam / (n * a)
        if not p < 1:
            raise ValueError(f"p_n = {p} is not a probability at n = {n}")
        return n * a * math.log1p(p * (jumps.mgf(theta) - 1.0))

    limit = LimitCumulant.poisson_md(jumps, lam)
    return ScgfLimitCheck(prelimit, limit, grid, horizons, tolerance, "poisson-md", note)


# ------------------------------------------------------- weak convergence


@dataclass
class WeakConvergenceCheck:
    """Empirical MGF of ``sampler(n, seed)`` draws against ``target(theta)``."""

    sampler: Callable[[int, int], np.ndarray]
    target: Callable[[np.ndarray], float]
    grid: np.ndarray
    n: int = 100_000
    multiplier: float = 4.0
    label: str = "weak"

    def __post_init__(self):
        self.grid = _grid(self.grid)
        if self.n < 10_000:
            raise ValueError("weak-convergence checks need at least 10^4 draws")


@dataclass
class WeakReport:
    label: str
    rows: list  # (theta..., empirical, se, target, z)
    multiplier: float
    passed: bool

    @property
    def z(self):
        return [r[-1] for r in self.rows]

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


def run_weak_convergence(check: WeakConvergenceCheck, seed) -> WeakReport:
    values = np.asarray(check.sampler(check.n, seed), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    rows = []
    for th in check.grid:
        tgt = float(check.target(th))
        if not math.isfinite(tgt):
            raise ValueError(f"target MGF is infinite at theta {th.tolist()}")
        w = np.exp(values @ th)
        emp = float(w.mean())
        se = float(w.std(ddof=1) / math.sqrt(w.size))
        diff = emp - tgt
        if abs(diff) <= 1e-12 * max(1.0, abs(tgt)):
            # degenerate transforms (e.g. theta = 0) are matched to rounding
            z = 0.0
        elif se > 0:
            z = diff / se
        else:
            z = math.copysign(math.inf, diff)
        rows.append((*th.tolist(), emp, se, tgt, z))
    passed = all(abs(r[-1]) <= check.multiplier for r in rows)
    return WeakReport(check.label, rows, check.multiplier, passed)


def imm_weak_check(levy: LevyModel, nu, t, grid, n=100_000, threads=1):
    """t**alpha S(L_nu(t)) / t against its Mittag-Leffler transform.

    The target is E_nu(<theta, Q theta>/2) for a centered driver and
    E_nu(<theta, m>) when the drift m is nonzero.
    """
    Q = levy.cumulant.hess0
    m = levy.cumulant.grad0
    clock = InverseStableModel(nu)
    one = ScalingRegime("one")

    def sampler(size, seed):
        return sample_time_changed(levy, clock, t, one, size, seed, threads=threads).values

    def target(theta):
        if np.any(m):
            return ml_eval(nu, float(theta @ m))
        return ml_eval(nu, 0.5 * float(theta @ Q @ theta))

    return WeakConvergenceCheck(sampler, target, grid, n, label="imm-weak")


def levy_weak_check(levy: LevyModel, clock: SubordinatorModel, t, grid, n=100_000, threads=1):
    """S(V(t)/t) against exp(kappa_V'(0) kappa_S(theta))."""
    one = ScalingRegime("one")

    def sampler(size, seed):
        return sample_time_changed(levy, clock, t, one, size, seed, threads=threads).values

    def target(theta):
        return math.exp(clock.mean_rate * levy.cumulant(theta))

    return WeakConvergenceCheck(sampler, target, grid, n, label="levy-weak")


def poisson_weak_check(jumps: JumpMixture, lam, n_summands, grid, n=100_000, threads=1):
    """Sum of n_summands X(lam / n_summands) against exp(lam (G(theta) - 1))."""
    model = TriangularSummandModel(jumps, lam / n_summands)

    def sampler(size, seed):
        return chunked(lambda s, rng: model.sample_sum(n_summands, s, rng), size, seed,
                       threads=threads)

    def target(theta):
        return math.exp(lam * (jumps.mgf(theta) - 1.0))

    return WeakConvergenceCheck(sampler, target, grid, n, label="poisson-weak")


def _rademacher_sums(h, n_summands, size, rng):
    """(sum of n_summands Rademacher signs) / sqrt(n_summands), h independent coordinates."""
    k = rng.binomial(n_summands, 0.5, size=(size, h))
    return (2.0 * k - n_summands) / math.sqrt(n_summands)


def gauss_hermite_mgf(fn, H, theta, order=80):
    """E exp(<theta, fn(Z)>) for Z ~ N(0, H) by tensor Gauss-Hermite quadrature."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = H.shape[0]
    nodes, weights = special.roots_hermitenorm(order)
    weights = weights / weights.sum()
    L = np.linalg.cholesky(H)
    grids = np.meshgrid(*([nodes] * h), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) @ L.T
    w = np.ones(pts.shape[0])
    for i, g in enumerate(np.meshgrid(*([weights] * h), indexing="ij")):
        w = w * g.ravel()
    vals = np.array([float(np.dot(theta, fn(x))) for x in pts])
    m = vals.max()
    return float(math.exp(m) * np.dot(w, np.exp(vals - m)))


def skew_normal_mgf(theta, delta):
    """E exp(<theta, U_2(Z)>) for Z ~ N(0, I_h), in closed form.

    Quadrature over |Z_h| converges slowly because of the kink at 0, so the
    half-normal factor E exp(c|Z|) = 2 exp(c^2/2) Phi(c) is used directly.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    c = float(theta @ delta)
    gauss = 0.5 * float(np.sum(theta**2 * (1.0 - delta**2)))
    return 2.0 * math.exp(gauss + 0.5 * c * c) * special.ndtr(c)


def skew_weak_check(delta, grid, n_summands=400, n=100_000, threads=1):
    """U_2 of normalized Rademacher sums against the skew-normal transform (Psi = I)."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    h = delta.size + 1

    def sampler(size, seed):
        def draw(s, rng):
            z = _rademacher_sums(h, n_summands, s, rng)
            return np.sqrt(1.0 - delta**2) * z[:, :-1] + delta * np.abs(z[:, -1:])

        return chunked(draw, size, seed, threads=threads)

    def target(theta):
        return skew_normal_mgf(theta, delta)

    return WeakConvergenceCheck(sampler, target, _grid(grid, h - 1), n, label="skew-weak")


def logistic_weak_check(h, grid, n_summands=400, n=100_000, threads=1, order=60):
    """U_1 of normalized Rademacher sums in R^h against the logistic-normal transform."""

    def sampler(size, seed):
        def draw(s, rng):
            z = _rademacher_sums(h, n_summands, s, rng)
            e = np.exp(np.concatenate([z, np.zeros((s, 1))], axis=1))
            return e / e.sum(axis=1, keepdims=True)

        return chunked(draw, size, seed, threads=threads)

    def target(theta):
        return gauss_hermite_mgf(logistic_map, np.eye(h), theta, order)

    return WeakConvergenceCheck(sampler, target, _grid(grid, h + 1), n, label="logistic-weak")


# ---------------------------------------------------------------- tails


def binomial_log_tail(n, p, k0, width=60.0):
    """log P(K >= k0) for K ~ Binomial(n, p), by log-space enumeration.

    Terms more than ``width`` nats below the largest are dropped, so the
    cost stays small for very large ``n``.
    """
    n = int(n)
    k0 = max(int(math.ceil(k0 - 1e-9)), 0)
    if k0 > n:
        return -math.inf
    if k0 == 0:
        return 0.0
    mode = int(math.floor((n + 1) * p))
    start = max(k0, min(mode, n))
    # walk outwards from the largest term in blocks until terms are negligible
    block = max(64, int(8 * math.sqrt(n * p * (1 - p) + 1)))
    peak = stats.binom.logpmf(start, n, p)
    parts = []
    hi = start
    while hi <= n:
        ks = np.arange(hi, min(hi + block, n + 1))
        lp = stats.binom.logpmf(ks, n, p)
        parts.append(lp)
        hi = ks[-1] + 1
        if lp[-1] < peak - width:
            break
    lo = start
    while lo > k0:
        ks = np.arange(max(k0, lo - block), lo)
        lp = stats.binom.logpmf(ks, n, p)
        parts.append(lp)
        lo = ks[0]
        if lp[0] < peak - width:
            break
    return float(special.logsumexp(np.concatenate(parts)))


def binomial_tail_sum_check(n, p, k0):
    """P(K >= k0) + P(K < k0) by full enumeration (for moderate n)."""
    ks = np.arange(n + 1)
    lp = stats.binom.logpmf(ks, n, p)
    upper = special.logsumexp(lp[ks >= k0]) if k0 <= n else -math.inf
    lower = special.logsumexp(lp[ks < k0]) if k0 > 0 else -math.inf
    return math.exp(upper) + math.exp(lower)


@dataclass
class TailDecayCheck:
    """(1/v_n) log P(B_n >= c) against -inf_{x >= c} I(x).

    ``estimator`` is ``"exact"`` for Binomial counts (B_n = a_n K with
    K ~ Binomial(n, p_n)) or ``"tilted"`` for the mean of n i.i.d. draws
    from ``"gaussian"`` or ``"bernoulli"`` under an exponential tilt.
    ``c = -inf`` is the whole line.
    """

    c: float
    horizons: Sequence[int]
    target: float
    estimator: str = "exact"
    a: Callable[[int], float] = lambda n: 1.0 / n
    p: Callable[[int], float] = lambda n: 0.5
    speed: Optional[Callable[[int], float]] = None
    law: str = "bernoulli"
    law_p: float = 0.5
    tilt: Optional[float] = None
    n_mc: int = 100_000
    seed: int = 0
    tolerance: float = 1e-2
    label: str = "tail"

    def __post_init__(self):
        if self.estimator not in ("exact", "tilted"):
            raise ValueError("estimator must be 'exact' or 'tilted'")
        if self.law not in ("gaussian", "bernoulli"):
            raise ValueError("law must be 'gaussian' or 'bernoulli'")
        if self.speed is None:
            self.speed = lambda n: 1.0 / self.a(n)


@dataclass
class TailReport:
    label: str
    rows: list  # (n, log P, d_n, target, |d_n - target|)
    target: float
    decreasing: bool
    passed: bool
    note: str = ""

    @property
    def final(self):
        return self.rows[-1][2]

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


def _cumulant_for(law, p):
    if law == "gaussian":
        return CumulantSpec(1, lambda th: 0.5 * th[0] ** 2, [0.0], [[1.0]],
                            grad=lambda th: th.copy(), hess=lambda th: np.eye(1))
    return CumulantSpec(
        1,
        lambda th: float(np.logaddexp(math.log1p(-p), math.log(p) + th[0])),
        [p],
        [[p * (1 - p)]],
    )


def default_tilt(law, p, c):
    """Conjugate argmax at the boundary point c."""
    res = conjugate(ConjugateProblem(_cumulant_for(law, p), [c]))
    if res.status == "infinite":
        raise ValueError(f"boundary point {c} lies outside the range of the {law} law")
    return float(res.theta[0])


def tilted_tail_probability(law, n, c, size, rng, p=0.5, tilt=None):
    """Estimate P(mean of n draws >= c) under an exponential tilt.

    Returns (estimate, standard error).  With ``tilt=0`` this is plain Monte
    Carlo.  The mean's sufficient statistic is sampled directly.
    """
    theta = default_tilt(law, p, c) if tilt is None else float(tilt)
    kappa = _cumulant_for(law, p)
    if law == "gaussian":
        s = rng.normal(n * theta, math.sqrt(n), size)
    else:
        pt = p * math.exp(theta) / (1 - p + p * math.exp(theta))
        s = rng.binomial(n, pt, size).astype(float)
    w = np.where(s >= n * c - 1e-9, np.exp(-theta * s + n * kappa([theta])), 0.0)
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(size))


def run_tail_decay(check: TailDecayCheck) -> TailReport:
    rows = []
    note = ""
    for i, n in enumerate(check.horizons):
        if check.c == -math.inf:
            logp = 0.0
        elif check.estimator == "exact":
            logp = binomial_log_tail(n, check.p(n), check.c / check.a(n))
        else:
            rng = rng_stream(check.seed, i)
            est, _ = tilted_tail_probability(check.law, n, check.c, check.n_mc, rng,
                                             check.law_p, check.tilt)
            logp = math.log(est) if est > 0 else -math.inf
            if est == 0:
                note = f"zero estimated probability at n={n}"
        d = logp / check.speed(n)
        rows.append((n, logp, d, check.target, abs(d - check.target)))
    errs = [r[-1] for r in rows]
    dec = _decreasing(errs)
    passed = bool(math.isfinite(errs[-1]) and errs[-1] <= check.tolerance and dec)
    return TailReport(check.label, rows, check.target, dec, passed, note)


def binomial_tail_check(p, c, horizons, regime="ld", lam=None, beta=0.5, tolerance=1e-2):
    """Exact-enumeration tail check for the Binomial family.

    ``regime="ld"``: B_n = K/n with K ~ Binomial(n, p), target -I_LD(c).
    ``regime="md"``: B_n = a_n K with p_n = lam/(n a_n), a_n = n**-beta,
    target -I_MD(c) at lam (defaults to p).
    """
    if regime == "ld":
        return TailDecayCheck(c=c, horizons=horizons, target=-binomial_poisson_rates(c, p)[0],
                              a=lambda n: 1.0 / n, p=lambda n: p, tolerance=tolerance,
                              label="binomial-ld")
    lam = p if lam is None else lam
    return TailDecayCheck(c=c, horizons=horizons, target=-binomial_poisson_rates(c, lam)[1],
                          a=lambda n: n ** (-beta), p=lambda n: lam * n ** (beta - 1.0),
                          tolerance=tolerance, label="binomial-md")


def tilted_tail_check(law, c, horizons, p=0.5, n_mc=100_000, seed=0, tolerance=1e-2):
    """Tilted Monte Carlo LD tail check for means of i.i.d. Gaussian or Bernoulli draws."""
    if law == "gaussian":
        target = -0.5 * c * c if c > 0 else 0.0
    else:
        target = -binomial_poisson_rates(c, p)[0] if c > p else 0.0
    return TailDecayCheck(c=c, horizons=horizons, target=target, estimator="tilted",
                          law=law, law_p=p, n_mc=n_mc, seed=seed, tolerance=tolerance,
                          label=f"{law}-tilted")


# ----------------------------------------------------------------- runner


def run_checks(jobs, threads=1):
    """Run zero-argument callables in a pool; results keep the input order."""
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda f: f(), jobs))
    return [f() for f in jobs]
