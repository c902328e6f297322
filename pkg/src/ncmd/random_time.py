"""Inverse stable subordinators and time-changed Levy marginals.

Only fixed-time marginals are ever simulated.  The inverse stable
subordinator satisfies L_nu(t) = (t / S_nu(1))**nu in law, where S_nu is the
stable subordinator it inverts, so one stable draw gives one exact L_nu(t).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .levy_models import (
    CHUNK,
    LevyModel,
    SampleBatch,
    SubordinatorModel,
    rng_stream,
    sample_positive_stable,
)

__all__ = [
    "InverseStableModel",
    "ScalingRegime",
    "alpha_nu",
    "sample_inverse_stable",
    "sample_time_changed",
]


@dataclass(frozen=True)
class InverseStableModel:
    """L_nu, the first-passage inverse of a standard nu-stable subordinator."""

    nu: float

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {self.nu!r}")

    def stable_sampler(self, size, rng):
        return sample_positive_stable(self.nu, size, rng)

    def sample_at(self, times, rng):
        times = np.asarray(times, dtype=float)
        s = self.stable_sampler(times.size, rng)
        return (times / s) ** self.nu

    def sample(self, t, n, rng):
        return self.sample_at(np.full(n, float(t)), rng)

    @property
    def kind(self):
        return "inverse_stable"


def alpha_nu(nu, drift):
    """1 - nu/2 for a centered driver, 1 - nu otherwise."""
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    return 1.0 - nu / 2.0 if not np.any(drift) else 1.0 - nu


@dataclass(frozen=True)
class ScalingRegime:
    """Normalisation a_t of a time-changed family.

    ``family`` is ``"one"`` (a_t = 1, weak-convergence regime), ``"power"``
    (a_t = t**-beta) or ``"inverse"`` (a_t = 1/t, reference LDP regime).
    ``alpha`` is only meaningful for inverse-stable clocks; leave it ``None``
    to have it derived from the driver.
    """

    family: str = "one"
    beta: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.family not in ("one", "power", "inverse"):
            raise ValueError(f"unknown scaling family {self.family!r}")
        if self.family == "power":
            if self.beta is None or not 0.0 <= self.beta <= 1.0:
                raise ValueError("power scaling needs beta in [0, 1]")
        elif self.beta is not None:
            raise ValueError(f"beta is only used by the power family, not {self.family!r}")

    def a(self, t):
        if self.family == "one":
            return 1.0
        if self.family == "inverse":
            return 1.0 / t
        return t ** (-self.beta)

    @property
    def is_moderate(self):
        """True iff a_t -> 0 and t a_t -> oo."""
        return self.family == "power" and 0.0 < self.beta < 1.0

    def speed(self, t):
        return 1.0 / self.a(t)


def _draw_pairs(draw, n, seed, stream, threads):
    """Chunked sampling with separate clock (key 0) and driver (key 1) streams."""
    sizes = [min(CHUNK, n - start) for start in range(0, n, CHUNK)]

    def job(i):
        return np.asarray(
            draw(sizes[i], rng_stream(seed, *stream, 0, i), rng_stream(seed, *stream, 1, i))
        )

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    return np.concatenate(parts, axis=0)


def _check_time(t, n):
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ValueError("t must be finite and nonnegative")
    if n < 1:
        raise ValueError("n must be >= 1")
    return t


def sample_inverse_stable(model: InverseStableModel, t, n, seed, *, stream=(), threads=1):
    """``n`` i.i.d. draws of L_nu(t) as an (n, 1) batch."""
    t = _check_time(t, n)
    vals = _draw_pairs(lambda size, rc, rd: model.sample(t, size, rc), n, seed, stream, threads)
    return SampleBatch(values=vals[:, None], seed=int(seed), stream=tuple(stream), t=t,
                       label=f"L_{model.nu}({t})")


def sample_time_changed(levy: LevyModel, clock, t, scaling: ScalingRegime, n, seed, *,
                        stream=(), threads=1):
    """Draws of the scaled time-changed object selected by clock kind and scaling.

    inverse-stable clock:  (a_t t)**alpha(nu) S(L_nu(t)) / t
    subordinator clock:    a_t S(V(t) / (t a_t))

    With a_t = 1 these are the weak-convergence families, with a_t = 1/t the
    reference-LDP families, and with a_t = t**-beta the moderate ones.
    """
    t = _check_time(t, n)
    if isinstance(clock, InverseStableModel):
        alpha = alpha_nu(clock.nu, levy.cumulant.grad0)
        if scaling.alpha is not None and not math.isclose(scaling.alpha, alpha, abs_tol=1e-12):
            raise ValueError(
                f"alpha={scaling.alpha} does not match alpha(nu)={alpha} for this driver"
            )
        if t == 0:
            return SampleBatch(np.zeros((n, levy.dim)), int(seed), tuple(stream), t)
        a = scaling.a(t)
        factor = (a * t) ** alpha / t

        def draw(size, rc, rd):
            return factor * levy.sample_at(clock.sample(t, size, rc), rd)

        label = f"(a t)^alpha S(L_{clock.nu}(t))/t"
    elif isinstance(clock, SubordinatorModel):
        if scaling.alpha is not None:
            raise ValueError("alpha applies to inverse-stable clocks only")
        if t == 0:
            return SampleBatch(np.zeros((n, levy.dim)), int(seed), tuple(stream), t)
        a = scaling.a(t)

        def draw(size, rc, rd):
            return a * levy.sample_at(clock.sample(t, size, rc) / (t * a), rd)

        label = "a S(V(t)/(t a))"
    else:
        raise TypeError(f"unsupported clock {clock!r}")
    vals = _draw_pairs(draw, n, seed, stream, threads)
    return SampleBatch(values=vals, seed=int(seed), stream=tuple(stream), t=t, label=label,
                       meta={"a_t": a, "family": scaling.family})
