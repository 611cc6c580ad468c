"""Command-line entry point.

Subcommands: ``theory``, ``speed-curve``, ``quantizer-bench``, ``simulate``
and ``sweep``. Any subcommand accepts ``--config FILE``, a JSON object whose
keys match flag names; flags given on the command line win.

Exit codes: 0 success, 2 invalid input, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .quantizer import check_budget, make_quantizer, profile_quantizer
from .sim import ExperimentSpec, compare_report, derive_seed, provenance, run_experiment, summary_csv, write_outputs
from .theory import PROFILES, check_params, eval_gamma, make_profile, theory_report

log = logging.getLogger("sutrack")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _profile_args(p):
    p.add_argument("--profile", choices=sorted(PROFILES), default="ideal")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--gain-bits", type=int, default=0)


def _process_args(p, alpha_required=True):
    p.add_argument("--alpha", type=float, required=alpha_required)
    p.add_argument("--sigma2", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sutrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sutrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("theory", help="evaluate the closed forms as JSON")
    _process_args(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    _profile_args(p)

    p = sub.add_parser("speed-curve", help="tabulate the accuracy-speed curve as CSV")
    _process_args(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--pmax", type=int, default=8)
    _profile_args(p)

    p = sub.add_parser("quantizer-bench", help="measure a quantizer's error on norm shells as CSV")
    p.add_argument("--kind", choices=["gain-shape", "uniform"], default="gain-shape")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--shape-bits", type=int, default=12)
    p.add_argument("--gain-bits", type=int, default=4)
    p.add_argument("--bits", type=int, default=None, help="total bits for --kind uniform")
    p.add_argument("--M", type=float, default=8.0)
    p.add_argument("--shells", type=int, default=8)
    p.add_argument("--profile-shells", type=int, default=32)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--probe-count", type=int, default=1024)

    p = sub.add_parser("simulate", help="run one tracking configuration")
    _process_args(p)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--rate", type=float, default=2.0)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--quantizer", choices=["gain-shape", "uniform", "lossless"], default="gain-shape")
    p.add_argument("--M", type=float, default=8.0)
    p.add_argument("--gain-bits", type=int, default=4)
    p.add_argument("--innovation", choices=["gaussian", "truncated-gaussian", "zero"], default="gaussian")
    p.add_argument("--keep-traces", action="store_true")
    p.add_argument("--no-profile", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep", help="run an experiment grid from a JSON file")
    p.add_argument("--spec", required=True, help="JSON experiment file")
    p.add_argument("--workers", type=int, default=None)

    for name, p in sub.choices.items():
        p.add_argument("--config", help="JSON file with flag values")
        p.add_argument("--seed", type=int, default=None if name == "sweep" else 0)
        p.add_argument("--out", default=None)
    return parser


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path and command:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in subparser._actions}
        values = {}
        for key, value in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in actions or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for {command}")
            values[dest] = value
            actions[dest].required = False
        subparser.set_defaults(**values)
    return parser.parse_args(argv)


def cmd_theory(args) -> str:
    profile = make_profile(args.profile, n=args.n, M=args.M, gain_bits=args.gain_bits, R=args.rate)
    rep = theory_report(args.alpha, args.rate, args.s, sigma2=args.sigma2, profile=profile,
                        kappa=args.kappa, beta=args.beta)
    doc = {"provenance": provenance(_resolved(args), args.seed), **rep.to_dict()}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def cmd_speed_curve(args) -> str:
    if args.pmax < 1:
        raise UsageError("--pmax must be >= 1")
    check_params(args.alpha, args.rate, 1, args.sigma2)
    profile = make_profile(args.profile, n=args.n, M=args.M, gain_bits=args.gain_bits, R=args.rate)
    buf = io.StringIO()
    buf.write("# " + json.dumps(provenance(_resolved(args), args.seed), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "gamma"])
    for p in range(1, args.pmax + 1):
        w.writerow([p, repr(eval_gamma(profile, args.alpha, args.sigma2, args.rate, p))])
    return buf.getvalue()


def cmd_quantizer_bench(args) -> str:
    if args.kind == "gain-shape":
        bits = args.shape_bits + args.gain_bits
    else:
        bits = args.bits if args.bits is not None else 2 * args.n
    q = make_quantizer(args.kind, args.n, bits, M=args.M, gain_bits=args.gain_bits,
                       seed=args.seed, probe_count=args.probe_count)
    top = math.sqrt(args.n) * args.M
    shells = top * np.linspace(0.1, 1.0, args.shells)
    # the fit sees the reported norms too (with independent probes): the error
    # curve has kinks at gain-cell edges that a line through other shells can miss
    dense = np.union1d(top * np.arange(1, args.profile_shells + 1) / args.profile_shells, shells)
    fit = profile_quantizer(q, args.M, dense, trials=args.trials, seed=derive_seed(args.seed, "bench-profile"))
    check = profile_quantizer(q, args.M, shells, trials=args.trials, seed=derive_seed(args.seed, "bench-check"))
    buf = io.StringIO()
    prov = provenance(_resolved(args), args.seed)
    prov["fit"] = {"theta": fit.theta, "eps": fit.eps}
    buf.write("# " + json.dumps(prov, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["norm", "mean_error", "std_error", "bound"])
    for rho, mean, se in zip(check.norms, check.mean_error, check.std_error):
        w.writerow([repr(float(rho)), repr(float(mean)), repr(float(se)), repr(float(fit.bound(rho)))])
    return buf.getvalue()


def _simulate_spec(args) -> ExperimentSpec:
    return ExperimentSpec(
        alpha=[args.alpha], sigma2=[args.sigma2], n=[args.n], R=[args.rate], s=[args.s], p=[args.p],
        quantizer=[{"kind": args.quantizer, "M": args.M, "gain_bits": args.gain_bits}],
        innovation=[args.innovation], trials=args.trials, T=args.T, master_seed=args.seed,
        keep_traces=args.keep_traces, profile=not args.no_profile, workers=args.workers)


def _run_spec(spec: ExperimentSpec, out: str | None) -> str:
    log.info("resolved experiment: %s", json.dumps(spec.to_dict(), sort_keys=True))
    records: list[str] = []
    rows = run_experiment(spec, records)
    if out:
        report = write_outputs(out, spec, rows, records)
        text = f"wrote {out}: {len(rows)} rows, status {report['status']}\n"
    else:
        text = summary_csv(rows, provenance(spec.to_dict(), spec.master_seed))
        report = compare_report(rows)
    if report["converse_violations"]:
        log.error("converse floor violated at points %s", report["converse_violations"])
    return text


def cmd_simulate(args) -> str:
    if args.s < 1 or args.p < 1 or args.s % args.p:
        raise UsageError(f"--p {args.p} must divide --s {args.s}")
    bits = args.n * args.rate * args.p
    if abs(bits - round(bits)) > 1e-9:
        raise UsageError(f"n * rate * p = {bits} must be a whole number of bits")
    check_budget(args.quantizer, int(round(bits)), args.gain_bits)
    return _run_spec(_simulate_spec(args), args.out)


def cmd_sweep(args) -> str:
    try:
        data = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read experiment file {args.spec}: {exc}") from exc
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    return _run_spec(ExperimentSpec.from_dict(data), args.out)


COMMANDS = {"theory": cmd_theory, "speed-curve": cmd_speed_curve, "quantizer-bench": cmd_quantizer_bench,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out")}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(build_parser(), argv)
        log.info("resolved config: %s", json.dumps(_resolved(args), sort_keys=True))
        text = COMMANDS[args.command](args)
        if args.command in ("simulate", "sweep"):
            sys.stdout.write(text)
        else:
            _emit(text, args.out)
    except ValueError as exc:
        print(f"sutrack: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"sutrack: runtime error: {exc}", file=sys.stderr)
        return 1
    return 0
