"""Measuring a gain-shape quantizer.

A random spherical codebook picks the direction, a uniform gain quantizer
the length. The profile fit summarises the measured error as
``theta * |y|^2 + n * eps^2`` and this script checks the fit on fresh draws.
"""

import math

import numpy as np

from sutrack.quantizer import make_quantizer, profile_quantizer

n, shape_bits, gain_bits, M = 8, 12, 4, 8.0
q = make_quantizer("gain-shape", n, shape_bits + gain_bits, M=M, gain_bits=gain_bits, seed=1)
cb = q.codebook
print(f"{cb.size} codewords in R^{n}: decode scale {cb.scale:.4f}, "
      f"mean shape distortion {cb.shape_distortion:.4f}")

top = math.sqrt(n) * M
fit = profile_quantizer(q, M, top * np.arange(1, 33) / 32, trials=200, seed=2)
print(f"fitted theta={fit.theta:.4f}, eps^2={fit.eps**2:.4f}\n")

check = profile_quantizer(q, M, top * np.linspace(0.1, 1.0, 8), trials=200, seed=3)
print("   |y|     mean error   bound      within 3 se")
for rho, mean, se in zip(check.norms, check.mean_error, check.std_error):
    bound = fit.bound(rho)
    print(f"{rho:7.2f}  {mean:10.4f}  {bound:9.4f}   {mean <= bound + 3 * se}")

# outside the dynamic range the quantizer refuses instead of clipping
y = np.full(n, M * 1.01)
print(f"\ninput with |y|^2 > n M^2 fails: {q.quantize(y).failed}")
