"""Acceptance criteria 1 to 10, each printed as one PASS/FAIL line.

The Monte Carlo criteria share module-scoped runs so the converse check
(criterion 5) and the determinism check (criterion 10) reuse them.
"""

import csv
import itertools
import math

import numpy as np
import pytest

from sutrack.cli import main
from sutrack.sim import ExperimentSpec, run_experiment, write_outputs
from sutrack.theory import (converse_accuracy, converse_dstar, divisors, eval_delta0, eval_g, eval_gamma,
                            ideal_profile, select_p, theory_report, uniform_profile)

pytestmark = pytest.mark.slow

GAIN_SHAPE = {"kind": "gain-shape", "gain_bits": 4}

SPECS = {
    4: dict(alpha=[0.9], R=[4.0], s=[4], p=[1], n=[16], T=4000, trials=200, master_seed=4,
            quantizer=[{"kind": "lossless"}]),
    7: dict(alpha=[0.5, 0.9], R=[2.0], s=[2, 4], p=[1], n=[8], T=1000, trials=40, master_seed=7,
            quantizer=[{**GAIN_SHAPE, "M": 8.0}]),
    # fixed rate, so the shape codebook grows with n: 1, 6, 11, 16 shape bits
    8: dict(alpha=[0.9], R=[1.25], s=[2], p=[1], n=[4, 8, 12, 16], T=2000, trials=40, master_seed=8,
            quantizer=[{**GAIN_SHAPE, "M": 4.0}]),
    9: dict(alpha=[0.9], sigma2=[1.0], R=[1.5], s=[10], p=[1], n=[8], T=2000, trials=500, master_seed=9,
            quantizer=[{**GAIN_SHAPE, "M": M} for M in (2.0, 4.0, 8.0, 16.0)], profile=False),
}


def execute(number, out_dir):
    spec = ExperimentSpec(**SPECS[number])
    records = []
    rows = run_experiment(spec, records)
    report = write_outputs(out_dir, spec, rows, records)
    return rows, report


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    cache = {}

    def get(number):
        if number not in cache:
            out = tmp_path_factory.mktemp(f"criterion{number}")
            cache[number] = (*execute(number, out), out)
        return cache[number]

    return get


def test_criterion_1_closed_form_goldens(report_criterion):
    # hand evaluations: 0.25*0.75/0.9375, 0.9375/1.5, 0.25*0.75, 0.1875/0.9375
    d, limit = converse_dstar(0.5, 1.0, 1.0, 1, 1)
    checks = [(eval_delta0(0.5, 1.0), 0.2), (eval_g(0.5, 2), 0.625), (d[1], 0.1875), (limit, 0.2)]
    worst = max(abs(a - b) for a, b in checks)
    report_criterion(1, worst <= 1e-12, f"max abs error {worst:.1e}")
    assert worst <= 1e-12


def test_criterion_2_achievability_meets_converse(report_criterion):
    alphas = [0.1, 0.3, 0.5, 0.7, 0.9]
    rates = [0.25, 0.5, 1.0, 2.0, 4.0]
    periods = [1, 2, 3, 4, 6, 8, 12, 16]
    worst = 0.0
    grid = list(itertools.product(alphas, rates, periods))
    assert len(grid) == 200
    for alpha, R, s in grid:
        sigma2 = 0.5 + alpha
        rep = theory_report(alpha, R, s, sigma2=sigma2)
        acc, floor = converse_accuracy(alpha, R, s, sigma2)
        worst = max(worst, abs(rep.achievable_accuracy - acc), abs(acc - (1 - floor / sigma2)),
                    abs(rep.achievable_accuracy - rep.converse_accuracy))
    report_criterion(2, worst <= 1e-12, f"200 points, max abs difference {worst:.1e}")
    assert worst <= 1e-12


def test_criterion_3_fastest_update_is_optimal(report_criterion):
    failures = []
    for alpha, R, s in itertools.product([0.3, 0.5, 0.9, 0.99], [0.5, 1.0, 2.0, 4.0], [2, 4, 6, 12]):
        for name, prof in (("ideal", ideal_profile()), ("uniform", uniform_profile(1, 1.0, R))):
            curve = [eval_gamma(prof, alpha, 1.0, R, p) for p in divisors(s)]
            decreasing = all(b < a for a, b in zip(curve, curve[1:]))
            if select_p(prof, alpha, 1.0, R, s) != 1 or not decreasing:
                failures.append((name, alpha, R, s))
    report_criterion(3, not failures, f"{len(failures)} failing tuples")
    assert not failures


def test_criterion_4_infinite_rate_limit(runs, report_criterion):
    rows, _, _ = runs(4)
    target = 0.81 * eval_g(0.9, 4)
    acc = rows[0].delta_mean
    ok = abs(acc - target) <= 0.02
    report_criterion(4, ok, f"mean accuracy {acc:.4f} vs {target:.4f}")
    assert ok


def test_criterion_6_quantizer_contract(tmp_path, report_criterion):
    out = tmp_path / "bench.csv"
    code = main(["quantizer-bench", "--n", "8", "--shape-bits", "12", "--gain-bits", "4", "--M", "8",
                 "--shells", "8", "--trials", "1000", "--seed", "6", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(line for line in out.read_text().splitlines() if not line.startswith("#")))
    assert len(rows) == 8
    slack = [float(r["bound"]) + 3 * float(r["std_error"]) - float(r["mean_error"]) for r in rows]
    ok = min(slack) >= 0
    report_criterion(6, ok, f"8 shells, min slack {min(slack):.4f}")
    assert ok


def test_criterion_7_prediction_loop(runs, report_criterion):
    rows, _, _ = runs(7)
    margins = [r.delta_mean - (r.gamma_pred - 0.05) for r in rows]
    ok = len(rows) == 4 and min(margins) >= 0
    detail = ", ".join(f"a={r.alpha} s={r.s}: {r.delta_mean:.3f}>={r.gamma_pred - 0.05:.3f}" for r in rows)
    report_criterion(7, ok, detail)
    assert ok


def test_criterion_8_gap_shrinks_with_dimension(runs, report_criterion):
    rows, _, _ = runs(8)
    assert [r.n for r in rows] == [4, 8, 12, 16] and all(r.simulated for r in rows)
    gaps = [r.delta0_g - r.delta_mean for r in rows]
    ses = [r.delta_se for r in rows]
    ok = all(gaps[i + 1] <= gaps[i] + 2 * math.hypot(ses[i], ses[i + 1]) for i in range(3))
    report_criterion(8, ok, "gaps " + ", ".join(f"n={r.n}: {g:.4f}" for r, g in zip(rows, gaps)))
    assert ok


def test_criterion_9_failure_rate_vs_dynamic_range(runs, report_criterion):
    rows, _, _ = runs(9)
    rates = [r.beta2_hat for r in rows]
    assert [r.M for r in rows] == [2.0, 4.0, 8.0, 16.0]
    ok = all(b <= a for a, b in zip(rates, rates[1:])) and rates[-1] == 0.0
    report_criterion(9, ok, "failure rates " + ", ".join(f"M={r.M:g}: {b:.3f}" for r, b in zip(rows, rates)))
    assert ok


def test_criterion_5_converse_floor(runs, report_criterion):
    checked, bad = 0, []
    for number in (7, 8, 9):
        rows, report, _ = runs(number)
        for r in rows:
            assert r.innovation == "gaussian"
            checked += 1
            if r.dbar_mean < r.converse_floor - 3 * r.dbar_se:
                bad.append((number, r.point))
        assert report["status"] == "ok"
    report_criterion(5, not bad, f"{checked} simulated configurations, {len(bad)} below the floor")
    assert not bad


def test_criterion_10_determinism(runs, tmp_path, report_criterion):
    _, _, first = runs(7)
    execute(7, tmp_path)
    names = ("trials.jsonl", "summary.csv", "report.json")
    same = all((first / f).read_bytes() == (tmp_path / f).read_bytes() for f in names)
    report_criterion(10, same, "criterion 7 outputs rerun and compared byte for byte")
    assert same
