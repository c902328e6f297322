"""Mittag-Leffler function and the inverse-stable clock.

Run:  python3 demos/01_mittag_leffler.py
"""
import math

import numpy as np

from ncmd.levy_models import rng_stream
from ncmd.mittag_leffler import ml_eval, ml_log_eval
from ncmd.random_time import InverseStableModel, sample_inverse_stable

# %% E_nu interpolates between exp (nu = 1) and 1/(1 - x) (nu -> 0)
for nu in (0.3, 0.5, 0.8, 0.999999):
    print(f"nu = {nu:<9}  E_nu(1) = {ml_eval(nu, 1.0):.12f}")
print(f"e          = {math.e:.12f}")

# %% for x > 0 the growth is exp(x^(1/nu)) / nu, so work with logs
x = 40.0
for nu in (0.3, 0.5, 0.8):
    lead = x ** (1 / nu) - math.log(nu)
    print(f"nu = {nu}: log E_nu({x}) = {ml_log_eval(nu, x):.6f}   leading term {lead:.6f}")

# %% for x < 0 it decays only algebraically, like -1/(Gamma(1 - nu) x)
for x in (-10.0, -100.0, -1000.0):
    print(f"E_0.5({x:>7}) = {ml_eval(0.5, x):.6e}   1/(sqrt(pi)|x|) = {1 / (math.sqrt(math.pi) * -x):.6e}")

# %% the inverse-stable clock L(t) has E exp(theta L(t)) = E_nu(theta t^nu)
nu, t, theta = 0.6, 2.0, -0.8
L = sample_inverse_stable(InverseStableModel(nu), t, 200_000, seed=1).values[:, 0]
w = np.exp(theta * L)
print(f"Monte Carlo {w.mean():.5f} +- {w.std() / math.sqrt(w.size):.5f}"
      f"   exact {ml_eval(nu, theta * t**nu):.5f}")

# %% streams are keyed, so a sub-experiment can be replayed on its own
print(rng_stream(7, 3).random(3), rng_stream(7, 3).random(3))
