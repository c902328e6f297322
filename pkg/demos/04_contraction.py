"""Rates pushed through continuous maps: skew-normal and logistic-normal.

Run:  python3 demos/04_contraction.py
"""
import numpy as np

from ncmd.legendre import contract
from ncmd.rate_functions import (
    SkewParams,
    gaussian_md_rate,
    logistic_contraction_problem,
    logistic_map,
    logistic_md_rate,
    skew_contraction_problem,
    skew_md_rate,
)

# %% skew map sqrt(1 - d^2) x1 + d |x2| of a Gaussian: two branches
p = SkewParams([[1.0]], [0.6])
print("   y   branch  closed     contraction")
for y in (-1.5, -1.0, 0.0, 1.0, 1.5):
    r = skew_md_rate([y], p)
    num = contract(skew_contraction_problem([y], p)).value
    print(f"{y:5.1f}   {r.branch}     {r.value:.6f}   {num:.6f}")

# %% without skewness it is the Gaussian quadratic again
p0 = SkewParams([[1.0]], [0.0])
print([skew_md_rate([y], p0).value for y in (-1.0, 0.5, 2.0)])

# %% logistic map onto the simplex; the boundary is never reached
H = np.array([[1.0, 0.2], [0.2, 0.5]])
for x in ([0.0, 0.0], [1.0, -0.5]):
    y = logistic_map(x)
    closed = logistic_md_rate(y, H)
    num = contract(logistic_contraction_problem(y, lambda z: gaussian_md_rate(z, H), 2)).value
    print(f"y = {np.round(y, 4)}  closed {closed:.6f}  contraction {num:.6f}")
print("boundary:", logistic_md_rate([0.5, 0.5, 0.0], H))
