"""Scaled cumulant limits, weak limits and tail decay, checked numerically.

Run:  python3 demos/03_limits_by_simulation.py
"""

from ncmd.convergence_lab import (
    binomial_tail_check,
    imm_scgf_check,
    imm_weak_check,
    poisson_scgf_check,
    poisson_weak_check,
    run_scgf_check,
    run_tail_decay,
    run_weak_convergence,
    tilted_tail_probability,
)
from ncmd.levy_models import BrownianWithDrift, JumpMixture, rng_stream
from ncmd.random_time import ScalingRegime

bm = BrownianWithDrift([0.0], [[1.0]])
unit = JumpMixture.point_mass([1.0])

# %% deterministic: the prelimit SCGF approaches its limit, here at rate 1/sqrt(t)
rep = run_scgf_check(imm_scgf_check(bm.cumulant, 0.5, ScalingRegime("power", 0.5),
                                    [[1.0]], [1e4, 1e6, 1e8]))
for hz, err in zip(rep.horizons, rep.errors):
    print(f"t = {hz:.0e}   error {err:.3e}")
print(rep.verdict, rep.note)

rep = run_scgf_check(poisson_scgf_check(unit, 1.0, 0.1, [[0.5]], [1e4, 1e5, 1e6]))
print("triangular array:", [f"{e:.1e}" for e in rep.errors], rep.verdict)

# %% stochastic: empirical MGFs against the limit transforms, z-scores
for chk in (imm_weak_check(bm, 0.5, 1e4, [[0.5], [1.0]]),
            poisson_weak_check(unit, 2.0, 10_000, [[0.3]])):
    rep = run_weak_convergence(chk, seed=3)
    for row in rep.rows:
        print(f"{chk.label:13} theta={row[0]:4}  emp {row[-4]:.5f}  target {row[-2]:.5f}  z {row[-1]:+.2f}")

# %% tails: exact Binomial enumeration reaches the rate slowly (a log n / n correction)
rep = run_tail_decay(binomial_tail_check(0.5, 0.75, [250, 500, 1000, 2000]))
for n, logp, d, target, err in rep.rows:
    print(f"n = {n:5d}  (1/n) log P = {d:.5f}   -I = {target:.5f}")

# %% exponential tilting makes a 3-sigma event cheap to estimate
est, se = tilted_tail_probability("gaussian", 1, 3.0, 20_000, rng_stream(1))
print(f"P(Z >= 3) ~ {est:.6f} +- {se:.6f}  (plain MC would see about {20_000 * est:.0f} hits)")
