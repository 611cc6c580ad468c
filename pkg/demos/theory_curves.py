"""How rate and sampling period limit tracking accuracy.

Prints the rate factor delta0(R), the sampling factor g(s), their product
(the best accuracy any tracking code can reach) and the accuracy-speed
curves of three quantizer families. Run with ``python demos/theory_curves.py``.
"""

from sutrack.theory import (converse_dstar, divisors, eval_delta0, eval_g, eval_gamma, gain_shape_profile,
                            ideal_profile, select_p, uniform_profile)

alpha, sigma2 = 0.9, 1.0

print(f"AR[1] process with alpha={alpha}, sigma2={sigma2}\n")
print("rate R   delta0(R)")
for R in (0.25, 0.5, 1, 2, 4, 8):
    print(f"{R:6}   {eval_delta0(alpha, R):.4f}")
print(f"  inf    {alpha**2:.4f}  (lossless limit)\n")

print("period s   g(s)     best accuracy at R=1")
for s in (1, 2, 4, 8, 16):
    print(f"{s:8}   {eval_g(alpha, s):.4f}   {eval_g(alpha, s) * eval_delta0(alpha, 1.0):.4f}")

# the converse recursion settles on the same floor
d, limit = converse_dstar(alpha, sigma2, 1.0, 4, 30)
print(f"\nconverse recursion at R=1, s=4: d_1={d[1]:.4f}, d_30={d[30]:.6f}, limit={limit:.6f}")

# Accuracy-speed curves. For the ideal and uniform families the fastest
# update wins; a gain-shape family with a coarse gain can prefer slow updates.
s, R, n = 8, 0.5, 8
families = {
    "ideal": ideal_profile(),
    "uniform (M=0.25)": uniform_profile(n, 0.25, R),
    "gain-shape (M=1, 4 gain bits)": gain_shape_profile(n, 1.0, 4),
}
print(f"\naccuracy-speed curve g(s) * Gamma(p) at R={R}, s={s}, n={n}")
print("p    " + "".join(f"{name:>32}" for name in families))
for p in divisors(s):
    row = "".join(f"{eval_g(alpha, s) * eval_gamma(prof, alpha, sigma2, R, p):32.4f}" for prof in families.values())
    print(f"{p:<5}{row}")
for name, prof in families.items():
    print(f"best p for {name}: {select_p(prof, alpha, sigma2, R, s)}")
