"""One tracking experiment next to its theory.

Runs the fast (p=1) update scheme with a gain-shape quantizer for a few
sampling periods and prints the simulated accuracy, the prediction from the
measured quantizer profile and the converse ceiling. A lossless run shows
the infinite-rate limit alpha^2 g(s).
"""

from sutrack.sim import ExperimentSpec, compare_report, run_experiment
from sutrack.theory import eval_g

spec = ExperimentSpec(alpha=[0.9], R=[2.0], s=[1, 2, 4], n=[8], T=1000, trials=20, master_seed=0,
                      quantizer=[{"kind": "gain-shape", "M": 8.0, "gain_bits": 4}])
rows = run_experiment(spec)
print("s   simulated       predicted  ceiling   failures")
for r in rows:
    print(f"{r.s}   {r.delta_mean:.4f}+-{r.delta_se:.4f}  {r.gamma_pred:.4f}     {r.delta0_g:.4f}    {r.beta2_hat:.2f}")
print("report status:", compare_report(rows)["status"])

lossless = ExperimentSpec(alpha=[0.9], R=[2.0], s=[4], n=[8], T=2000, trials=20, master_seed=0,
                          quantizer=[{"kind": "lossless"}])
row = run_experiment(lossless)[0]
print(f"\nlossless s=4: accuracy {row.delta_mean:.4f}, limit alpha^2 g(4) = {0.81 * eval_g(0.9, 4):.4f}")
