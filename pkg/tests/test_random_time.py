import math

import numpy as np
import pytest
from scipy import stats

from ncmd.levy_models import (
    BrownianWithDrift,
    CompoundPoisson,
    GammaSubordinator,
    JumpMixture,
    PoissonSubordinator,
    rng_stream,
)
from ncmd.mittag_leffler import ml_eval
from ncmd.random_time import (
    InverseStableModel,
    ScalingRegime,
    alpha_nu,
    sample_inverse_stable,
    sample_time_changed,
)

ONE = ScalingRegime("one")


def test_model_validation():
    with pytest.raises(ValueError):
        InverseStableModel(1.0)


def test_zero_time():
    b = sample_inverse_stable(InverseStableModel(0.5), 0.0, 10, seed=1)
    assert b.values.shape == (10, 1) and not np.any(b.values)


def test_mean_of_inverse_stable():
    v = sample_inverse_stable(InverseStableModel(0.5), 1.0, 10**6, seed=2).values[:, 0]
    # E L(1) = 1/Gamma(1 + nu): derivative of E_nu(theta) at 0, numerically
    h = 1e-6
    mean = (ml_eval(0.5, h) - ml_eval(0.5, -h)) / (2 * h)
    assert mean == pytest.approx(1 / math.gamma(1.5), rel=1e-8)
    assert abs(v.mean() - mean) <= 4 * v.std() / 1e3


@pytest.mark.parametrize("nu,t,theta", [(0.5, 2.0, -1.0), (0.3, 1.0, -2.0), (0.8, 3.0, 0.2)])
def test_mgf_identity(nu, t, theta):
    v = sample_inverse_stable(InverseStableModel(nu), t, 10**5, seed=3).values[:, 0]
    w = np.exp(theta * v)
    assert abs(w.mean() - ml_eval(nu, theta * t**nu)) <= 4 * w.std() / math.sqrt(w.size)


def test_self_similarity_ks():
    m = InverseStableModel(0.6)
    c, n = 3.0, 10**5
    a = sample_inverse_stable(m, c * 2.0, n, seed=4).values[:, 0]
    b = c**0.6 * sample_inverse_stable(m, 2.0, n, seed=5).values[:, 0]
    d = stats.ks_2samp(a, b).statistic
    crit = 1.628 * math.sqrt(2 / n)  # 1% two-sample critical value
    assert d < crit


def test_thread_independence():
    m = InverseStableModel(0.4)
    a = sample_inverse_stable(m, 5.0, 140_000, seed=6).values
    b = sample_inverse_stable(m, 5.0, 140_000, seed=6, threads=3).values
    assert np.array_equal(a, b)


def test_scaling_regime():
    assert ScalingRegime("power", 0.5).is_moderate
    assert not ScalingRegime("power", 1.0).is_moderate
    assert not ScalingRegime("inverse").is_moderate
    assert not ScalingRegime("one").is_moderate
    assert ScalingRegime("power", 0.25).a(16.0) == 0.5
    assert ScalingRegime("inverse").speed(7.0) == 7.0
    with pytest.raises(ValueError):
        ScalingRegime("power")
    with pytest.raises(ValueError):
        ScalingRegime("one", beta=0.5)
    with pytest.raises(ValueError):
        ScalingRegime("log")


def test_alpha():
    assert alpha_nu(0.5, [0.0, 0.0]) == 0.75
    assert alpha_nu(0.5, [1.0, 0.0]) == 0.5


def test_time_changed_zero():
    bm = BrownianWithDrift([0.0], [[1.0]])
    for clock in (InverseStableModel(0.5), PoissonSubordinator(1.0)):
        b = sample_time_changed(bm, clock, 0.0, ONE, 4, seed=1)
        assert not np.any(b.values)


def test_time_changed_rejects_inconsistent_scaling():
    bm = BrownianWithDrift([0.0], [[1.0]])
    with pytest.raises(ValueError):
        sample_time_changed(bm, InverseStableModel(0.5), 1.0, ScalingRegime("one", alpha=0.5), 10, 1)
    with pytest.raises(ValueError):
        sample_time_changed(bm, PoissonSubordinator(1.0), 1.0, ScalingRegime("one", alpha=0.75), 10, 1)
    with pytest.raises(TypeError):
        sample_time_changed(bm, object(), 1.0, ONE, 10, 1)


def test_imm_weak_example():
    bm = BrownianWithDrift([0.0, 0.0], np.eye(2))
    v = sample_time_changed(bm, InverseStableModel(0.5), 1e4, ScalingRegime("one", alpha=0.75),
                            10**5, seed=7).values
    w = np.exp(v @ np.array([0.5, 0.0]))
    assert abs(w.mean() - ml_eval(0.5, 0.125)) <= 4 * w.std() / math.sqrt(w.size)


def test_levy_weak_example():
    bm = BrownianWithDrift([0.0], [[1.0]])
    v = sample_time_changed(bm, PoissonSubordinator(1.0), 1e4, ONE, 10**5, seed=8).values[:, 0]
    w = np.exp(0.5 * v)
    assert abs(w.mean() - math.exp(0.125)) <= 4 * w.std() / math.sqrt(w.size)


def test_conditional_gaussian_covariance():
    # S(L) given L is N(0, Q L): covariance of S(L(t)) is Q E[L(t)]
    Q = np.array([[1.0, 0.4], [0.4, 0.5]])
    bm = BrownianWithDrift([0.0, 0.0], Q)
    clock = InverseStableModel(0.5)
    t, n = 4.0, 200_000
    rng_c, rng_d = rng_stream(9, 0), rng_stream(9, 1)
    L = clock.sample(t, n, rng_c)
    S = bm.sample_at(L, rng_d)
    # normalising by each draw's own L removes the clock noise
    Z = S / np.sqrt(L)[:, None]
    cov = np.cov(Z, rowvar=False)
    se = np.sqrt((Q**2 + np.outer(np.diag(Q), np.diag(Q))) / n)
    assert np.all(np.abs(cov - Q) <= 4 * se)
    emp = np.cov(S, rowvar=False)
    assert np.allclose(emp, Q * L.mean(), rtol=0.05)


def test_moderate_scaling_shrinks():
    cp = CompoundPoisson(1.0, JumpMixture([0.5, 0.5], [[1.0], [-1.0]], np.zeros((2, 1, 1))))
    b1 = sample_time_changed(cp, GammaSubordinator(1.0, 1.0), 1e2, ScalingRegime("power", 0.5),
                             50_000, seed=10).values
    b2 = sample_time_changed(cp, GammaSubordinator(1.0, 1.0), 1e4, ScalingRegime("power", 0.5),
                             50_000, seed=10).values
    assert b2.std() < b1.std()
