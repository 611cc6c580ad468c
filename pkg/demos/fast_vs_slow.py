"""When slow but accurate updates beat fast but loose ones.

With few bits per slot a gain-shape quantizer spends most of a short
budget on the gain, so each fast update barely helps. Pooling p slots into
one update buys a real shape codebook. The analytic curve and the
simulation agree on the ordering.
"""

from sutrack.quantizer import BudgetError, check_budget
from sutrack.sim import ExperimentSpec, run_experiment
from sutrack.theory import divisors, eval_g, eval_gamma, gain_shape_profile

alpha, n, R, s, M, gain_bits = 0.9, 8, 0.5, 4, 2.0, 4
prof = gain_shape_profile(n, M, gain_bits)
print(f"n={n}, R={R} bits/dim/slot ({int(n * R)} bits per slot), s={s}, M={M}, {gain_bits} gain bits\n")
print("p   update bits  analytic g*Gamma(p)")
for p in divisors(s):
    print(f"{p}   {int(n * R * p):11}  {eval_g(alpha, s) * eval_gamma(prof, alpha, 1.0, R, p):9.4f}")

usable = []
for p in divisors(s):
    try:
        check_budget("gain-shape", int(n * R * p), gain_bits)
        usable.append(p)
    except BudgetError as exc:
        print(f"p={p} cannot be simulated: {exc}")

spec = ExperimentSpec(alpha=[alpha], R=[R], s=[s], p=usable, n=[n], T=1000, trials=20, master_seed=1,
                      quantizer=[{"kind": "gain-shape", "M": M, "gain_bits": gain_bits}])
print("\np   simulated accuracy")
for r in run_experiment(spec):
    print(f"{r.p}   {r.delta_mean:.4f} +- {r.delta_se:.4f}")
