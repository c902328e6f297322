"""Closed-form rate functions next to the numeric Legendre transform.

Run:  python3 demos/02_rate_functions.py
"""
import numpy as np

from ncmd.levy_models import BrownianWithDrift, GammaSubordinator, JumpMixture
from ncmd.rate_functions import (
    LimitCumulant,
    binomial_poisson_rates,
    h_nu,
    imm_md_centered_1d,
    imm_md_explicit_cases,
)

# %% centered driver: the moderate-deviation rate grows like |x|^(2/(2 - nu))
lc = LimitCumulant.imm_md_centered([[2.0]], 0.5)
print("   x    closed      numeric")
for x in np.linspace(-2, 2, 5):
    print(f"{x:5.1f}  {imm_md_centered_1d(x, 2.0, 0.5):.8f}  {lc.rate([x]):.8f}")

# %% with drift the rate is one-sided: +inf against the drift
lc = LimitCumulant.imm_md_drift([1.0], 0.5)
for x in (-1.0, 0.5, 2.0):
    print(f"x = {x:4}: H = {h_nu(x, 1.0, 0.5)}, numeric {lc.rate([x])}")

# %% in two dimensions only the ray through the drift has a finite rate
m = np.array([2.0, 1.0])
for x in ([1.0, 0.5], [1.0, -0.5], [1.0, 1.0]):
    val, tag, _ = imm_md_explicit_cases(x, m, 0.5)
    print(f"x = {x}: case {tag:4} rate {val}")

# %% Binomial counts: the LD rate dominates the Poisson MD rate, equal only at p
p = 0.3
for x in (0.0, 0.1, 0.3, 0.6, 1.0):
    ld, md = binomial_poisson_rates(x, p)
    print(f"x = {x:3}: I_LD = {ld:.6f}  I_MD = {md:.6f}  diff = {ld - md:.6f}")

# %% with a random clock the order flips: I_MD >= I_LD for a subordinated driver
drv, clk = BrownianWithDrift([0.4], [[1.0]]), GammaSubordinator(2.0, 2.0)
ld, md = LimitCumulant.levy_ld(drv.cumulant, clk), LimitCumulant.levy_md(drv.cumulant, clk)
for x in (-1.0, 0.4, 1.5):
    print(f"x = {x:4}: I_LD = {ld.rate([x]):.6f}  I_MD = {md.rate([x]):.6f}")

# %% jumps with a Gaussian component work the same way
jumps = JumpMixture([0.5, 0.5], [[1.0], [-0.3]], [[[0.1]], [[0.0]]])
print("POISSON_LD at 0.5:", LimitCumulant.poisson_ld(jumps, 0.4).rate([0.5]))
