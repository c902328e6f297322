"""Cumulant generating functions and exact fixed-time samplers.

Three kinds of driving objects are covered:

* multivariate Levy processes ``S`` (Brownian motion with drift, compound
  Poisson with Gaussian / point-mass jump mixtures, pure drift),
* scalar subordinators ``V`` (gamma, Poisson, drift-free stable),
* the i.i.d. summands of a triangular array, equal to 0 with probability
  ``1 - p`` and to a draw from a fixed jump law otherwise.

Every sampler takes an explicit ``numpy.random.Generator``; nothing touches
global random state.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

__all__ = [
    "CumulantSpec",
    "JumpMixture",
    "LevyModel",
    "BrownianWithDrift",
    "DeterministicDrift",
    "CompoundPoisson",
    "SubordinatorModel",
    "GammaSubordinator",
    "PoissonSubordinator",
    "StableSubordinator",
    "TriangularSummandModel",
    "SampleBatch",
    "mgf_of_summand",
    "sample_batch",
    "sample_positive_stable",
    "rng_stream",
    "finite_difference_gradient",
    "finite_difference_hessian",
]

CHUNK = 1 << 16


def rng_stream(seed, *key):
    """Generator for stream ``key`` under ``seed``.

    Streams with different keys are statistically independent; the same
    ``(seed, key)`` always reproduces the same draws.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _as_vector(theta, dim):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise ValueError(f"expected a vector of length {dim}, got shape {theta.shape}")
    return theta


def _psd_sqrt(cov):
    """Symmetric square root of a positive semidefinite matrix."""
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ValueError("covariance matrix is not positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def finite_difference_gradient(f, theta, step):
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2.0 * step)
    return g


def finite_difference_hessian(f, theta, step):
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    h = np.empty((n, n))
    f0 = f(theta)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        h[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / step**2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = step
            h[i, j] = h[j, i] = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * step**2)
    return h


@dataclass(frozen=True)
class CumulantSpec:
    """A cumulant generating function kappa on R^dim.

    ``func`` must return ``inf`` wherever kappa is infinite.  The declared
    ``domain_radius`` is the radius of a ball around 0 on which kappa is
    known to be finite; it is metadata for solvers and probes, not a
    truncation.  ``essentially_smooth`` is declared, never derived.
    """

    dim: int
    func: Callable[[np.ndarray], float]
    grad0: np.ndarray
    hess0: np.ndarray
    domain_radius: float = math.inf
    essentially_smooth: bool = True
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "grad0", np.asarray(self.grad0, dtype=float).reshape(self.dim))
        object.__setattr__(
            self, "hess0", np.asarray(self.hess0, dtype=float).reshape(self.dim, self.dim)
        )
        if not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive")

    def __call__(self, theta):
        theta = _as_vector(theta, self.dim)
        val = float(self.func(theta))
        return math.inf if math.isnan(val) else val

    def probe_step(self):
        return 1e-4 * min(1.0, self.domain_radius)


@dataclass(frozen=True)
class JumpMixture:
    """Finite mixture of point masses and Gaussians on R^h (never at 0).

    Point masses are Gaussians with zero covariance, so the moment
    generating function is always ``sum_j w_j exp(<theta,m_j> + theta'C_j theta/2)``.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m.reshape(w.size, -1)
        h = m.shape[1]
        c = np.asarray(self.covs, dtype=float).reshape(w.size, h, h)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        for mj, cj in zip(m, c):
            _psd_sqrt(cj)
            if not np.any(mj) and not np.any(cj):
                raise ValueError("a point mass at 0 is not a nonzero jump")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        object.__setattr__(self, "_roots", np.array([_psd_sqrt(cj) for cj in c]))

    @classmethod
    def point_mass(cls, at):
        at = np.atleast_1d(np.asarray(at, dtype=float))
        return cls([1.0], at[None, :], np.zeros((1, at.size, at.size)))

    @classmethod
    def gaussian(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([1.0], mean[None, :], np.asarray(cov, dtype=float)[None])

    @property
    def dim(self):
        return self.means.shape[1]

    def _exponents(self, theta):
        return self.means @ theta + 0.5 * np.einsum("i,jik,k->j", theta, self.covs, theta)

    def mgf(self, theta):
        theta = _as_vector(theta, self.dim)
        e = self._exponents(theta)
        with np.errstate(over="ignore"):
            return float(np.dot(self.weights, np.exp(e)))

    def log_mgf(self, theta):
        theta = _as_vector(theta, self.dim)
        return float(special.logsumexp(self._exponents(theta), b=self.weights))

    def grad_mgf(self, theta):
        theta = _as_vector(theta, self.dim)
        with np.errstate(over="ignore"):
            wexp = self.weights * np.exp(self._exponents(theta))
        slopes = self.means + np.einsum("jik,k->ji", self.covs, theta)
        return wexp @ slopes

    def hess_mgf(self, theta):
        theta = _as_vector(theta, self.dim)
        with np.errstate(over="ignore"):
            wexp = self.weights * np.exp(self._exponents(theta))
        slopes = self.means + np.einsum("jik,k->ji", self.covs, theta)
        return np.einsum("j,jik->ik", wexp, self.covs) + np.einsum("j,ji,jk->ik", wexp, slopes, slopes)

    @property
    def mean(self):
        return self.weights @ self.means

    @property
    def second_moment(self):
        return np.einsum("j,jik->ik", self.weights, self.covs) + np.einsum(
            "j,ji,jk->ik", self.weights, self.means, self.means
        )

    def sample(self, n, rng):
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._roots[comp], z)

    def sample_sums(self, counts, rng):
        """Row i is the sum of ``counts[i]`` independent jumps (exact)."""
        counts = np.asarray(counts, dtype=np.int64)
        split = rng.multinomial(counts, self.weights)  # (n, J)
        z = rng.standard_normal((counts.size, self.weights.size, self.dim))
        gauss = np.einsum("jik,njk->nji", self._roots, z) * np.sqrt(split)[:, :, None]
        return split @ self.means + gauss.sum(axis=1)


# --------------------------------------------------------------------- Levy


class LevyModel:
    """Base class: an R^h valued Levy process known through kappa and fixed-time marginals."""

    kind = "levy"
    cumulant: CumulantSpec

    @property
    def dim(self):
        return self.cumulant.dim

    def sample_at(self, times, rng):
        """One draw of S(t) for every entry of ``times``; shape (len(times), dim)."""
        raise NotImplementedError

    def sample(self, t, n, rng):
        return self.sample_at(np.full(n, float(t)), rng)


class BrownianWithDrift(LevyModel):
    """S(t) = mu t + Sigma^(1/2) W(t)."""

    kind = "brownian"

    def __init__(self, mu, sigma):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        h = self.mu.size
        self.sigma = np.asarray(sigma, dtype=float).reshape(h, h)
        if not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("sigma must be symmetric")
        self._root = _psd_sqrt(self.sigma)
        mu_, sig = self.mu, self.sigma
        self.cumulant = CumulantSpec(
            dim=h,
            func=lambda th: mu_ @ th + 0.5 * th @ sig @ th,
            grad0=mu_,
            hess0=sig,
            grad=lambda th: mu_ + sig @ th,
            hess=lambda th: sig,
        )

    def sample_at(self, times, rng):
        times = np.asarray(times, dtype=float)
        z = rng.standard_normal((times.size, self.dim))
        return times[:, None] * self.mu + np.sqrt(times)[:, None] * (z @ self._root.T)

    def __repr__(self):
        return f"BrownianWithDrift(mu={self.mu.tolist()}, sigma={self.sigma.tolist()})"


class DeterministicDrift(LevyModel):
    """S(t) = mu t."""

    kind = "drift"

    def __init__(self, mu):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        mu_ = self.mu
        h = mu_.size
        self.cumulant = CumulantSpec(
            dim=h,
            func=lambda th: mu_ @ th,
            grad0=mu_,
            hess0=np.zeros((h, h)),
            grad=lambda th: mu_,
            hess=lambda th: np.zeros((h, h)),
        )

    def sample_at(self, times, rng):
        return np.asarray(times, dtype=float)[:, None] * self.mu

    def __repr__(self):
        return f"DeterministicDrift(mu={self.mu.tolist()})"


class CompoundPoisson(LevyModel):
    """Jumps at Poisson(rate) times with law ``jumps``; kappa = rate (G - 1)."""

    kind = "compound_poisson"

    def __init__(self, rate, jumps: JumpMixture):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.jumps = jumps
        lam, J = self.rate, jumps
        self.cumulant = CumulantSpec(
            dim=J.dim,
            func=lambda th: lam * (J.mgf(th) - 1.0),
            grad0=lam * J.mean,
            hess0=lam * J.second_moment,
            grad=lambda th: lam * J.grad_mgf(th),
            hess=lambda th: lam * J.hess_mgf(th),
        )

    def sample_at(self, times, rng):
        counts = rng.poisson(self.rate * np.asarray(times, dtype=float))
        return self.jumps.sample_sums(counts, rng)

    def __repr__(self):
        return f"CompoundPoisson(rate={self.rate}, jumps={self.jumps.dim}-dim mixture)"


# ------------------------------------------------------------ subordinators


def sample_positive_stable(nu, size, rng):
    """Draws of S with E exp(-s S) = exp(-s**nu), 0 < nu < 1.

    Kanter's form of the Chambers-Mallows-Stuck construction; exact.
    """
    if not 0.0 < nu < 1.0:
        raise ValueError("nu must lie in (0, 1)")
    u = rng.uniform(0.0, math.pi, size)
    w = rng.standard_exponential(size)
    return (
        np.sin(nu * u)
        / np.sin(u) ** (1.0 / nu)
        * (np.sin((1.0 - nu) * u) / w) ** ((1.0 - nu) / nu)
    )


class SubordinatorModel:
    """A nondecreasing scalar Levy process V with kappa_V and mean rate kappa_V'(0)."""

    kind = "subordinator"
    cumulant: Optional[CumulantSpec]
    mean_rate: float

    def sample_at(self, times, rng):
        raise NotImplementedError

    def sample(self, t, n, rng):
        return self.sample_at(np.full(n, float(t)), rng)

    def kappa(self, eta):
        if self.cumulant is None:
            raise ValueError(f"{type(self).__name__} has no finite cumulant near 0")
        return self.cumulant(np.atleast_1d(eta))

    def kappa_scalar(self, eta):
        raise NotImplementedError

    def kappa_derivative(self, eta):
        raise NotImplementedError


class GammaSubordinator(SubordinatorModel):
    """V(1) ~ Gamma(shape, rate); kappa_V(eta) = -shape log(1 - eta/rate), eta < rate."""

    kind = "gamma"

    def __init__(self, shape, rate):
        if not (shape > 0 and rate > 0):
            raise ValueError("gamma subordinator needs shape > 0 and rate > 0")
        self.shape = float(shape)
        self.rate = float(rate)
        self.mean_rate = self.shape / self.rate
        self.cumulant = CumulantSpec(
            dim=1,
            func=lambda th: self.kappa_scalar(th[0]),
            grad0=[self.mean_rate],
            hess0=[[self.shape / self.rate**2]],
            domain_radius=self.rate,
            grad=lambda th: np.array([self.kappa_derivative(th[0])]),
            hess=lambda th: np.array([[self.shape / (self.rate - th[0]) ** 2]]),
        )

    def kappa_scalar(self, eta):
        if eta >= self.rate:
            return math.inf
        return -self.shape * math.log1p(-eta / self.rate)

    def kappa_derivative(self, eta):
        if eta >= self.rate:
            return math.inf
        return self.shape / (self.rate - eta)

    def sample_at(self, times, rng):
        return rng.gamma(self.shape * np.asarray(times, dtype=float), 1.0 / self.rate)

    def __repr__(self):
        return f"GammaSubordinator(shape={self.shape}, rate={self.rate})"


class PoissonSubordinator(SubordinatorModel):
    """V = Poisson process; kappa_V(eta) = rate (e^eta - 1)."""

    kind = "poisson"

    def __init__(self, rate):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.mean_rate = self.rate
        self.cumulant = CumulantSpec(
            dim=1,
            func=lambda th: self.kappa_scalar(th[0]),
            grad0=[self.rate],
            hess0=[[self.rate]],
            grad=lambda th: np.array([self.kappa_derivative(th[0])]),
            hess=lambda th: np.array([[self.kappa_derivative(th[0])]]),
        )

    def kappa_scalar(self, eta):
        if eta > 709.0:
            return math.inf
        return self.rate * math.expm1(eta)

    def kappa_derivative(self, eta):
        if eta > 709.0:
            return math.inf
        return self.rate * math.exp(eta)

    def sample_at(self, times, rng):
        return rng.poisson(self.rate * np.asarray(times, dtype=float)).astype(float)

    def __repr__(self):
        return f"PoissonSubordinator(rate={self.rate})"


class StableSubordinator(SubordinatorModel):
    """Drift-free nu-stable subordinator, E exp(-s V(t)) = exp(-t s**nu).

    Sampling only: kappa_V is +inf for every eta > 0.
    """

    kind = "stable"

    def __init__(self, nu):
        if not 0.0 < nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")
        self.nu = float(nu)
        self.cumulant = None
        self.mean_rate = math.inf

    def sample_at(self, times, rng):
        times = np.asarray(times, dtype=float)
        return times ** (1.0 / self.nu) * sample_positive_stable(self.nu, times.size, rng)

    def __repr__(self):
        return f"StableSubordinator(nu={self.nu})"


# --------------------------------------------------------- triangular array


@dataclass(frozen=True)
class TriangularSummandModel:
    """X(p): zero with probability 1 - p, otherwise a draw from ``jumps``.

    The moment generating function is ``1 - p + p G(theta)`` with ``G`` the
    jump MGF, so ``p`` is the probability of a *nonzero* value.
    """

    jumps: JumpMixture
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @property
    def dim(self):
        return self.jumps.dim

    def G(self, theta):
        return self.jumps.mgf(theta)

    @property
    def jump_mean(self):
        return self.jumps.mean

    def with_p(self, p):
        return TriangularSummandModel(self.jumps, p)

    def sample(self, n, rng):
        nonzero = rng.random(n) < self.p
        out = np.zeros((n, self.dim))
        out[nonzero] = self.jumps.sample(int(nonzero.sum()), rng)
        return out

    def sample_sum(self, n_summands, size, rng):
        """``size`` draws of X_1 + ... + X_n, exactly: Binomial count then summed jumps."""
        counts = rng.binomial(int(n_summands), self.p, size=size)
        return self.jumps.sample_sums(counts, rng)


def mgf_of_summand(model: TriangularSummandModel, theta):
    g = model.G(theta)
    if math.isinf(g):
        return math.inf if model.p > 0 else 1.0
    return 1.0 - model.p + model.p * g


# ------------------------------------------------------------------ batches


@dataclass(frozen=True)
class SampleBatch:
    """``n`` i.i.d. draws (rows of ``values``) with the stream they came from."""

    values: np.ndarray
    seed: int
    stream: tuple = ()
    t: Optional[float] = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def mean(self):
        return self.values.mean(axis=0)

    def cov(self):
        return np.atleast_2d(np.cov(self.values, rowvar=False))


def chunked(draw, n, seed, stream=(), threads=1):
    """Run ``draw(size, rng)`` over fixed-size chunks; chunk i uses stream (*stream, i).

    Chunk boundaries do not depend on ``threads``, so neither do the results.
    """
    sizes = [min(CHUNK, n - start) for start in range(0, n, CHUNK)]

    def job(i):
        return np.asarray(draw(sizes[i], rng_stream(seed, *stream, i)))

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    return np.concatenate(parts, axis=0)


def sample_batch(model, t, n, seed, *, stream=(), threads=1):
    """``n`` independent draws of the model at time ``t``.

    Accepts a :class:`LevyModel` or :class:`SubordinatorModel`; scalar
    outputs are returned as an (n, 1) batch.
    """
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 1:
        raise ValueError("n must be >= 1")
    values = chunked(lambda size, rng: model.sample(t, size, rng), n, seed, stream, threads)
    if values.ndim == 1:
        values = values[:, None]
    return SampleBatch(values=values, seed=int(seed), stream=tuple(stream), t=t, label=repr(model))
