import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmd.levy_models import (
    BrownianWithDrift,
    CompoundPoisson,
    CumulantSpec,
    DeterministicDrift,
    GammaSubordinator,
    JumpMixture,
    PoissonSubordinator,
    StableSubordinator,
    TriangularSummandModel,
    finite_difference_gradient,
    finite_difference_hessian,
    mgf_of_summand,
    rng_stream,
    sample_batch,
    sample_positive_stable,
)

UNIT = JumpMixture.point_mass([1.0])
MIX = JumpMixture([0.6, 0.4], [[1.0, 0.0], [-0.5, 0.5]],
                  [np.zeros((2, 2)), [[0.2, 0.05], [0.05, 0.1]]])


def _models():
    return [
        BrownianWithDrift([0.3, -0.2], [[1.0, 0.3], [0.3, 0.5]]),
        DeterministicDrift([1.0, 2.0]),
        CompoundPoisson(1.5, MIX),
        GammaSubordinator(2.0, 3.0),
        PoissonSubordinator(0.7),
    ]


def _cumulants():
    return [m.cumulant for m in _models()]


# ---------------------------------------------------------------- MGF


def test_summand_mgf_examples():
    assert mgf_of_summand(TriangularSummandModel(UNIT, 0.0), [2.0]) == 1.0
    assert mgf_of_summand(TriangularSummandModel(UNIT, 0.3), [0.0]) == 1.0
    assert mgf_of_summand(TriangularSummandModel(UNIT, 0.3), [1.0]) == pytest.approx(
        1 - 0.3 + 0.3 * math.e, rel=1e-15)
    assert mgf_of_summand(TriangularSummandModel(UNIT, 0.3), [1.0]) == pytest.approx(1.515485, abs=1e-6)


def test_summand_mgf_monte_carlo():
    m = TriangularSummandModel(UNIT, 0.3)
    x = m.sample(10**6, rng_stream(3))[:, 0]
    w = np.exp(x)
    assert abs(w.mean() - mgf_of_summand(m, [1.0])) <= 4 * w.std() / 1e3


def test_summand_probability_is_nonzero_mass():
    m = TriangularSummandModel(UNIT, 0.3)
    x = m.sample(200_000, rng_stream(4))[:, 0]
    assert abs((x != 0).mean() - 0.3) <= 4 * math.sqrt(0.21 / 200_000)


def test_summand_rejects_bad_p():
    with pytest.raises(ValueError):
        TriangularSummandModel(UNIT, 1.5)


def test_jump_mixture_validation():
    with pytest.raises(ValueError):
        JumpMixture([0.5, 0.6], [[1.0], [2.0]], np.zeros((2, 1, 1)))
    with pytest.raises(ValueError):
        JumpMixture.point_mass([0.0])


def test_jump_mixture_derivatives():
    th = np.array([0.3, -0.4])
    g = finite_difference_gradient(MIX.mgf, th, 1e-6)
    H = finite_difference_hessian(MIX.mgf, th, 1e-4)
    assert np.allclose(MIX.grad_mgf(th), g, atol=1e-8)
    assert np.allclose(MIX.hess_mgf(th), H, atol=1e-6)
    assert MIX.log_mgf(th) == pytest.approx(math.log(MIX.mgf(th)))


def test_jump_sums_match_moments():
    counts = np.full(200_000, 3)
    s = MIX.sample_sums(counts, rng_stream(5))
    assert np.allclose(s.mean(axis=0), 3 * MIX.mean, atol=4 * s.std(axis=0).max() / math.sqrt(2e5))


# -------------------------------------------------------------- cumulants


@pytest.mark.parametrize("k", range(5))
def test_cumulant_zero_and_gradient(k):
    kap = _cumulants()[k]
    z = np.zeros(kap.dim)
    assert kap(z) == pytest.approx(0.0, abs=1e-15)
    g = finite_difference_gradient(kap, z, kap.probe_step())
    assert np.all(np.abs(g - kap.grad0) < 1e-5)
    H = finite_difference_hessian(kap, z, 1e-3 * min(1.0, kap.domain_radius))
    assert np.allclose(H, kap.hess0, atol=1e-4)
    assert np.linalg.eigvalsh(kap.hess0).min() >= -1e-12


@pytest.mark.parametrize("k", range(5))
@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_cumulant_midpoint_convexity(k, data):
    kap = _cumulants()[k]
    r = min(kap.domain_radius, 3.0) * 0.99
    vec = st.lists(st.floats(-1, 1), min_size=kap.dim, max_size=kap.dim)
    a = np.array(data.draw(vec)) * r / math.sqrt(kap.dim)
    b = np.array(data.draw(vec)) * r / math.sqrt(kap.dim)
    assert kap((a + b) / 2) <= (kap(a) + kap(b)) / 2 + 1e-12 * (1 + abs(kap(a)) + abs(kap(b)))


def test_gamma_cumulant_infinite_outside_domain():
    g = GammaSubordinator(1.0, 2.0)
    assert g.kappa_scalar(2.0) == math.inf
    assert g.cumulant([2.5]) == math.inf
    assert g.kappa_scalar(1.0) == pytest.approx(math.log(2.0))


def test_cumulant_nan_is_inf():
    k = CumulantSpec(1, lambda th: math.nan, [0.0], [[0.0]])
    assert k([1.0]) == math.inf


def test_cumulant_domain_radius_validated():
    with pytest.raises(ValueError):
        CumulantSpec(1, lambda th: 0.0, [0.0], [[0.0]], domain_radius=0.0)


def test_stable_subordinator_has_no_cumulant():
    s = StableSubordinator(0.5)
    assert s.cumulant is None and s.mean_rate == math.inf
    with pytest.raises(ValueError):
        s.kappa(0.1)


# ---------------------------------------------------------------- samplers


def test_brownian_at_zero_is_zero():
    b = sample_batch(BrownianWithDrift([0.0, 0.0], np.eye(2)), 0.0, 5, seed=1)
    assert b.values.shape == (5, 2) and not np.any(b.values)


def test_poisson_subordinator_mean():
    b = sample_batch(PoissonSubordinator(2.0), 3.0, 10**5, seed=2)
    assert abs(b.mean()[0] - 6.0) <= 3 * math.sqrt(6.0 / 1e5)


def test_gamma_subordinator_mean():
    g = GammaSubordinator(2.5, 2.5)
    rate = finite_difference_gradient(g.cumulant, np.zeros(1), 1e-6)[0]
    assert rate == pytest.approx(1.0, abs=1e-8)
    b = sample_batch(g, 1.0, 10**5, seed=3)
    assert abs(b.mean()[0] - rate) <= 3 * math.sqrt(1 / 2.5 / 1e5)


def test_sample_batch_rejects_bad_input():
    m = PoissonSubordinator(1.0)
    with pytest.raises(ValueError):
        sample_batch(m, math.inf, 10, seed=0)
    with pytest.raises(ValueError):
        sample_batch(m, -1.0, 10, seed=0)
    with pytest.raises(ValueError):
        sample_batch(m, 1.0, 0, seed=0)


@pytest.mark.parametrize("k", range(5))
def test_sampling_is_deterministic_and_thread_independent(k):
    m = _models()[k]
    a = sample_batch(m, 1.7, 150_000, seed=11).values
    b = sample_batch(m, 1.7, 150_000, seed=11, threads=4).values
    c = sample_batch(m, 1.7, 150_000, seed=12).values
    assert np.array_equal(a, b)
    if k != 1:  # the deterministic drift ignores its stream
        assert not np.array_equal(a, c)


@pytest.mark.parametrize("k", [0, 2, 3, 4])
def test_moments_match_cumulant(k):
    m = _models()[k]
    v = sample_batch(m, 1.0, 200_000, seed=21 + k).values
    kap = m.cumulant
    se = np.sqrt(np.diag(kap.hess0) / 2e5)
    assert np.all(np.abs(v.mean(axis=0) - kap.grad0) <= 4 * se)
    cov = np.atleast_2d(np.cov(v, rowvar=False))
    assert np.allclose(cov, kap.hess0, rtol=0.05, atol=0.01)


@pytest.mark.parametrize("k", [0, 2, 3, 4])
def test_levy_additivity(k):
    m = _models()[k]
    s, t, n = 0.6, 1.1, 200_000
    a = sample_batch(m, s, n, seed=31).values + sample_batch(m, t, n, seed=32).values
    c = sample_batch(m, s + t, n, seed=33).values
    se_mean = np.sqrt(a.var(axis=0) / n + c.var(axis=0) / n)
    assert np.all(np.abs(a.mean(axis=0) - c.mean(axis=0)) <= 4 * se_mean)
    va, vc = a.var(axis=0), c.var(axis=0)
    # SE of a sample variance ~ sqrt((m4 - var^2) / n)
    m4 = np.mean((a - a.mean(axis=0)) ** 4, axis=0)
    se_var = np.sqrt(2 * np.maximum(m4 - va**2, 0) / n)
    assert np.all(np.abs(va - vc) <= 4 * se_var)


def test_subordinator_nonnegative_and_coupled_increments():
    for m in (GammaSubordinator(1.0, 1.0), PoissonSubordinator(1.0), StableSubordinator(0.6)):
        rng = rng_stream(41)
        vs = m.sample(0.5, 50_000, rng)
        inc = m.sample(0.7, 50_000, rng)
        assert np.all(vs >= 0) and np.all(vs + inc >= vs)


@pytest.mark.parametrize("nu", [0.3, 0.5, 0.8])
def test_positive_stable_laplace_transform(nu):
    s = sample_positive_stable(nu, 200_000, rng_stream(51))
    assert np.all(s > 0)
    for lam in (0.5, 1.0, 2.0):
        w = np.exp(-lam * s)
        assert abs(w.mean() - math.exp(-lam**nu)) <= 4 * w.std() / math.sqrt(w.size)


def test_triangular_sum_sampler_mean():
    m = TriangularSummandModel(MIX, 0.01)
    s = m.sample_sum(1000, 100_000, rng_stream(61))
    assert np.all(np.abs(s.mean(axis=0) - 10 * MIX.mean) <= 4 * s.std(axis=0) / math.sqrt(1e5))


def test_rng_streams_are_reproducible():
    a = rng_stream(5, 1, 2).random(4)
    b = rng_stream(5, 1, 2).random(4)
    c = rng_stream(5, 2, 1).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
