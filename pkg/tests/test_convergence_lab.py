import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ncmd.convergence_lab import (
    ScgfLimitCheck,
    TailDecayCheck,
    WeakConvergenceCheck,
    binomial_log_tail,
    binomial_tail_check,
    binomial_tail_sum_check,
    default_tilt,
    gauss_hermite_mgf,
    imm_scgf_check,
    imm_weak_check,
    levy_scgf_check,
    levy_weak_check,
    logistic_weak_check,
    poisson_scgf_check,
    poisson_weak_check,
    run_checks,
    run_scgf_check,
    run_tail_decay,
    run_weak_convergence,
    skew_normal_mgf,
    skew_weak_check,
    tilted_tail_check,
    tilted_tail_probability,
)
from ncmd.levy_models import (
    BrownianWithDrift,
    GammaSubordinator,
    JumpMixture,
    PoissonSubordinator,
    rng_stream,
)
from ncmd.random_time import ScalingRegime
from ncmd.rate_functions import binomial_poisson_rates

UNIT = JumpMixture.point_mass([1.0])
BM1 = BrownianWithDrift([0.0], [[1.0]])


# ---------------------------------------------------------------- SCGF


def test_poisson_scgf_exact_lambda_schedule():
    rep = run_scgf_check(poisson_scgf_check(UNIT, 1.0, 0.1, [[0.0], [0.25], [0.5]], [1e4, 1e5, 1e6]))
    assert rep.passed and rep.final_error <= 1e-6
    # theta = 0 is exact at every horizon
    assert all(r[-1] == 0.0 for r in rep.rows if r[1] == 0.0)


def test_poisson_scgf_gap_is_second_order():
    # leading-order gap lambda^2 (G - 1)^2 / (2 n a_n)
    rep = run_scgf_check(poisson_scgf_check(UNIT, 1.0, 0.1, [[1.0]], [1e4, 1e5, 1e6], tolerance=1e-5))
    gap = (math.e - 1) ** 2 / (2 * 1e6 ** 0.9)
    assert rep.final_error == pytest.approx(gap, rel=1e-3)


def test_gamma_clock_scgf():
    chk = levy_scgf_check(BM1.cumulant, GammaSubordinator(1.0, 1.0), ScalingRegime("power", 0.5),
                          [[1.0]], [1e2, 1e4, 1e6])
    rep = run_scgf_check(chk)
    assert rep.passed and rep.final_error <= 1e-3
    # closed-form prelimit -sqrt(t) log(1 - 0.5/sqrt(t))
    t = 1e6
    assert rep.rows[-1][2] == pytest.approx(-math.sqrt(t) * math.log1p(-0.5 / math.sqrt(t)), rel=1e-14)
    assert rep.rows[-1][3] == 0.5


def test_imm_centered_scgf_decreasing():
    chk = imm_scgf_check(BM1.cumulant, 0.5, ScalingRegime("power", 0.5), [[1.0]], [1e4, 1e6, 1e8])
    rep = run_scgf_check(chk)
    assert rep.rows[-1][3] == pytest.approx(0.25, rel=1e-14)
    assert rep.decreasing and rep.passed and rep.final_error <= chk.tolerance


def test_imm_reference_scgf():
    chk = imm_scgf_check(BrownianWithDrift([0.5], [[1.0]]).cumulant, 0.6, ScalingRegime("inverse"),
                         [[-0.5], [0.3], [1.0]], [1e2, 1e4, 1e6], tolerance=1e-3)
    assert run_scgf_check(chk).passed


def test_scgf_non_finite_prelimit_raises():
    chk = ScgfLimitCheck(lambda t, th: math.inf, lambda th: 0.0, [[0.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        run_scgf_check(chk)


def test_scgf_horizons_validated():
    with pytest.raises(ValueError):
        ScgfLimitCheck(lambda t, th: 0.0, lambda th: 0.0, [[0.0]], [2.0, 1.0])


def test_scgf_requires_decrease_over_last_three():
    errs = iter([1.0, 0.1, 0.2, 0.05])
    chk = ScgfLimitCheck(lambda t, th: next(errs), lambda th: 0.0, [[0.0]], [1, 2, 3, 4], tolerance=0.1)
    rep = run_scgf_check(chk)
    assert rep.final_error == 0.05 and not rep.decreasing and not rep.passed


@settings(max_examples=40, deadline=None)
@given(errs=st.lists(st.floats(0, 1), min_size=3, max_size=8), tol=st.floats(0, 1))
def test_scgf_prefix_reporting_is_monotone(errs, tol):
    # a PASS at the last horizon of a schedule is unchanged when later horizons are dropped
    def verdict(e):
        it = iter(e)
        chk = ScgfLimitCheck(lambda t, th: next(it), lambda th: 0.0, [[0.0]],
                             list(range(1, len(e) + 1)), tolerance=tol)
        return run_scgf_check(chk).passed

    full = verdict(errs)
    again = verdict(errs)
    assert full == again
    for k in range(3, len(errs) + 1):
        pre = verdict(errs[:k])
        ref = errs[k - 1] <= tol and all(b <= a for a, b in zip(errs[k - 3:k], errs[k - 2:k]))
        assert pre == ref


# ---------------------------------------------------------------- weak


def test_theta_zero_is_exact():
    chk = WeakConvergenceCheck(lambda n, s: rng_stream(s).normal(size=(n, 1)), lambda th: 1.0, [[0.0]], 10_000)
    rep = run_weak_convergence(chk, 0)
    assert rep.rows[0][1] == 1.0 and rep.z == [0.0]


def test_weak_batch_size_floor():
    with pytest.raises(ValueError):
        WeakConvergenceCheck(lambda n, s: np.zeros((n, 1)), lambda th: 1.0, [[0.0]], 9_999)


def test_infinite_target_raises():
    chk = WeakConvergenceCheck(lambda n, s: np.zeros((n, 1)), lambda th: math.inf, [[1.0]], 10_000)
    with pytest.raises(ValueError):
        run_weak_convergence(chk, 0)


def test_poisson_weak_example():
    target = math.exp(2 * (math.exp(0.3) - 1))
    assert target == pytest.approx(2.013184, abs=1e-6)
    chk = poisson_weak_check(UNIT, 2.0, 10_000, [[0.0], [0.3]], n=100_000)
    rep = run_weak_convergence(chk, 7)
    assert rep.rows[1][3] == pytest.approx(target, rel=1e-14)
    assert rep.passed, rep.z


def test_imm_weak():
    rep = run_weak_convergence(imm_weak_check(BM1, 0.5, 1e4, [[0.0], [0.5], [1.0]]), 8)
    assert rep.passed, rep.z


def test_levy_weak():
    rep = run_weak_convergence(levy_weak_check(BM1, PoissonSubordinator(1.0), 1e4, [[-0.5], [0.5]]), 9)
    assert rep.passed, rep.z
    assert rep.rows[1][3] == pytest.approx(math.exp(0.125))


def test_skew_normal_mgf_against_quadrature():
    delta = np.array([0.6, -0.3])
    for th in ([0.7, 0.0], [-1.0, 0.5], [0.0, 0.0]):
        th = np.array(th)
        s = np.sqrt(1 - delta**2)
        c = float(th @ delta)
        # quadrature split at the kink of |z|
        half = 2 * integrate.quad(lambda z: np.exp(c * z - 0.5 * z * z), 0, 40)[0] / math.sqrt(2 * math.pi)
        ref = math.exp(0.5 * float(np.sum((th * s) ** 2))) * half
        assert skew_normal_mgf(th, delta) == pytest.approx(ref, rel=1e-10)
    # the smooth tensor rule agrees to its kink-limited accuracy
    gh = gauss_hermite_mgf(lambda x: np.array([0.8 * x[0] + 0.6 * abs(x[1])]), np.eye(2), [0.7])
    assert gh == pytest.approx(skew_normal_mgf([0.7], [0.6]), rel=3e-3)


def test_skew_weak():
    rep = run_weak_convergence(skew_weak_check([0.6], [[-1.0], [0.7], [1.0]]), 10)
    assert rep.passed, rep.z


def test_logistic_quadrature_against_scipy():
    def mgf(th):
        def f(z):
            e = np.exp([z, 0.0])
            return math.exp(float(np.dot(th, e / e.sum()))) * stats.norm.pdf(z)

        return integrate.quad(f, -40, 40, limit=200)[0]

    for th in ([1.0, 0.0], [0.0, 2.0], [-1.5, 0.5]):
        assert gauss_hermite_mgf(lambda x: np.exp(np.append(x, 0.0)) / np.exp(np.append(x, 0.0)).sum(),
                                 np.eye(1), th, 60) == pytest.approx(mgf(np.array(th)), rel=1e-9)


def test_logistic_weak():
    rep = run_weak_convergence(logistic_weak_check(1, [[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]), 11)
    assert rep.passed, rep.z
    # a constant transform is matched exactly
    assert rep.rows[2][-1] == 0.0


def test_weak_sampler_deterministic():
    a = run_weak_convergence(poisson_weak_check(UNIT, 1.0, 1000, [[0.5]], n=20_000), 3)
    b = run_weak_convergence(poisson_weak_check(UNIT, 1.0, 1000, [[0.5]], n=20_000, threads=3), 3)
    assert a.rows == b.rows


# ---------------------------------------------------------------- tails


def test_whole_line_tail():
    rep = run_tail_decay(TailDecayCheck(c=-math.inf, horizons=[10, 100, 1000], target=0.0))
    assert rep.final == 0.0 and rep.passed


def test_binomial_ld_tail():
    rep = run_tail_decay(binomial_tail_check(0.5, 0.75, [500, 1000, 2000]))
    assert rep.target == pytest.approx(-0.130812, abs=1e-6)
    assert abs(rep.final - rep.target) <= 0.01 and rep.passed


def test_binomial_md_tail():
    rep = run_tail_decay(binomial_tail_check(0.5, 0.75, [10**4, 10**6, 10**8], regime="md", tolerance=0.02))
    assert rep.target == pytest.approx(-0.054099, abs=1e-6)
    assert rep.passed


@pytest.mark.parametrize("n,p,k0", [(2000, 0.5, 1500), (1000, 0.1, 130), (50, 0.3, 0), (50, 0.3, 51)])
def test_log_tail_against_scipy(n, p, k0):
    ref = stats.binom.logsf(k0 - 1, n, p)
    assert binomial_log_tail(n, p, k0) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("k0", [0, 700, 1000, 1500, 2001])
def test_tail_and_complement_sum_to_one(k0):
    assert abs(binomial_tail_sum_check(2000, 0.5, k0) - 1.0) <= 1e-12


def test_tilted_gaussian_unbiased():
    ref = stats.norm.sf(3.0)
    q = integrate.quad(stats.norm.pdf, 3.0, np.inf)[0]
    assert ref == pytest.approx(q, rel=1e-10)
    # one standard Gaussian draw, i.e. a mean of n = 1
    est, se = tilted_tail_probability("gaussian", 1, 3.0, 100_000, rng_stream(1))
    assert abs(est - q) <= 3 * se


def test_tilted_bernoulli_matches_exact():
    n, c = 200, 0.7
    est, se = tilted_tail_probability("bernoulli", n, c, 100_000, rng_stream(2), p=0.5)
    exact = math.exp(binomial_log_tail(n, 0.5, c * n))
    assert abs(est - exact) <= 4 * se


def test_default_tilt_is_conjugate_argmax():
    assert default_tilt("gaussian", 0.5, 2.0) == pytest.approx(2.0, abs=1e-8)
    assert default_tilt("bernoulli", 0.5, 0.75) == pytest.approx(math.log(3.0), abs=1e-8)
    with pytest.raises(ValueError):
        default_tilt("bernoulli", 0.5, 1.5)


def test_tilted_tail_decay():
    rep = run_tail_decay(tilted_tail_check("gaussian", 1.0, [50, 200, 800], n_mc=50_000, seed=4))
    assert rep.target == -0.5 and rep.passed


def test_zero_probability_is_reported():
    chk = TailDecayCheck(c=3.0, horizons=[100, 200, 400], target=-4.5, estimator="tilted",
                         law="gaussian", tilt=0.0, n_mc=10_000, seed=5)
    rep = run_tail_decay(chk)
    assert not rep.passed and "zero estimated probability" in rep.note
    assert rep.rows[-1][1] == -math.inf


def test_tail_check_validation():
    with pytest.raises(ValueError):
        TailDecayCheck(c=0.0, horizons=[1], target=0.0, estimator="bootstrap")
    with pytest.raises(ValueError):
        TailDecayCheck(c=0.0, horizons=[1], target=0.0, law="cauchy")


def test_rate_value_used_as_target():
    assert binomial_tail_check(0.3, 0.5, [100]).target == -binomial_poisson_rates(0.5, 0.3)[0]


def test_run_checks_order():
    jobs = [lambda i=i: i * i for i in range(10)]
    assert run_checks(jobs, threads=4) == [i * i for i in range(10)]
