"""Command-line interface: ``zimediate fit`` and ``zimediate simulate``.

Exit codes: 0 success; 1 the fit did not converge or its covariance is
flagged; 2 bad input (arguments, CSV, scenario file); 3 estimation failure.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .distributions import MediatorFamily
from .effects import EFFECT_NAMES, EffectRequest, effects_with_inference
from .estimator import FitConfig
from .exceptions import IngestionError, ZIMediationError
from .false_zero import DEFAULT_B
from .io import ingest_csv, load_scenario
from .selection import select_model

FIT_SCHEMA = "zimediate.fit/1"
SIMULATE_SCHEMA = "zimediate.simulate/1"
ERROR_SCHEMA = "zimediate.error/1"

EXIT_OK, EXIT_FLAGGED, EXIT_INPUT, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="zimediate", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log EM progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a CSV dataset and report mediation effects")
    f.add_argument("--input", required=True, help="CSV file with a header row")
    f.add_argument("--y", required=True, help="outcome column")
    f.add_argument("--m", required=True, help="observed mediator column")
    f.add_argument("--x", required=True, help="exposure column")
    f.add_argument("--z", action="append", default=[], help="confounder column (repeatable)")
    f.add_argument("--family", default="auto", choices=["auto", "zilon", "zinb", "zip"])
    f.add_argument("--x1", type=float, default=0.0, help="reference exposure (default 0)")
    f.add_argument("--x2", type=float, default=1.0, help="contrast exposure (default 1)")
    f.add_argument("--cde-m", type=float, default=None,
                   help="mediator value for the CDE (default: median positive m)")
    f.add_argument("--B", type=float, default=DEFAULT_B, help="false-zero cap (default 20)")
    f.add_argument("--ci-level", type=float, default=0.95)
    f.add_argument("--max-em-iters", type=int, default=500)
    f.add_argument("--em-tol", type=float, default=1e-6)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--output", default="json", choices=["json", "table", "both"])

    s = sub.add_parser("simulate", help="run a replicate study")
    s.add_argument("--scenario", required=True,
                   help="scenario file (key = value lines) or a preset name such as zinb-30")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--reps", type=int, default=None, help="override the number of replicates")
    s.add_argument("--output", default="table", choices=["json", "table", "both", "csv"])
    return p


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """Recursively turn numpy scalars into Python numbers and NaN/inf into None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(report):
    return json.dumps(_clean(report), indent=2, allow_nan=False)


def _num(v, width=12):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return f"{'NA':>{width}}"
    return f"{v:>{width}.6g}"


def fit_report(args, dataset, selection, estimates):
    res = selection.chosen_fit
    est = res.theta_hat.as_dict()
    se = res.se
    warnings = list(selection.notes) + list(estimates.warnings)
    status = "ok" if res.reliable else "flagged"
    return {
        "schema": FIT_SCHEMA,
        "status": status,
        "seed": args.seed,
        "input": {
            "path": os.path.basename(args.input), "n": len(dataset),
            "n_zero": int(len(dataset.idx_zero)), "zero_fraction": dataset.zero_fraction,
            "integer_mediator": dataset.integer_mediator,
            "columns": {"y": args.y, "m": args.m, "x": args.x, "z": list(args.z)},
        },
        "config": {
            "family": args.family, "B": args.B, "ci_level": args.ci_level,
            "max_em_iters": args.max_em_iters, "em_tol": args.em_tol,
        },
        "selection": {
            "chosen": selection.chosen.label,
            "aic_table": [row.as_dict() for row in selection.table],
        },
        "parameters": [{"name": k, "estimate": est[k], "se": se[k]} for k in est],
        "effects": estimates.as_dict(),
        "diagnostics": {
            "converged": res.converged, "n_iters": res.n_iters, "loglik": res.loglik,
            "aic": res.aic, "k": res.k, "stalled_steps": res.stalled_steps,
            "min_loglik_step": res.min_trace_step(), "flags": list(res.flags),
        },
        "warnings": warnings,
    }


def fit_table(report):
    out = []
    inp = report["input"]
    out.append(f"data: {inp['path']}  n={inp['n']}  zeros={inp['n_zero']} "
               f"({100 * inp['zero_fraction']:.1f}%)  seed={report['seed']}")
    out.append("")
    out.append("model selection (AIC)")
    out.append(f"  {'family':<7}{'k':>4}{'loglik':>14}{'AIC':>14}  status")
    for row in report["selection"]["aic_table"]:
        mark = "*" if row["family"] == report["selection"]["chosen"] else " "
        k = "" if row["k"] is None else row["k"]
        out.append(f"{mark} {row['family']:<7}{k:>4}{_num(row['loglik'], 14)}"
                   f"{_num(row['aic'], 14)}  {row['status']}")
    out.append("")
    out.append("parameters")
    out.append(f"  {'name':<10}{'estimate':>12}{'se':>12}")
    for p in report["parameters"]:
        out.append(f"  {p['name']:<10}{_num(p['estimate'])}{_num(p['se'])}")
    eff = report["effects"]
    out.append("")
    out.append(f"effects for x {eff['x1']:g} -> {eff['x2']:g}  (CDE at m = {eff['cde_m']:g}, "
               f"{100 * eff['ci_level']:g}% CI)")
    out.append(f"  {'effect':<7}{'estimate':>12}{'se':>12}{'ci_lower':>12}{'ci_upper':>12}"
               f"{'p_value':>12}")
    for name in EFFECT_NAMES:
        e = eff[name]
        out.append(f"  {name:<7}{_num(e['estimate'])}{_num(e['se'])}{_num(e['ci_lower'])}"
                   f"{_num(e['ci_upper'])}{_num(e['p_value'])}")
    d = report["diagnostics"]
    out.append("")
    out.append(f"converged={d['converged']}  iterations={d['n_iters']}  loglik={d['loglik']:.6g}  "
               f"AIC={d['aic']:.6g}  k={d['k']}")
    for flag in d["flags"]:
        out.append(f"flag: {flag}")
    for w in report["warnings"]:
        out.append(f"warning: {w}")
    return "\n".join(out)


def error_report(exc, kind):
    err = {"type": kind, "message": str(exc)}
    if isinstance(exc, IngestionError):
        err["line"] = exc.line
        err["column"] = exc.column
    return {"schema": ERROR_SCHEMA, "error": err}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_fit(args, stdout):
    if not 0.0 < args.ci_level < 1.0:
        raise UsageError("--ci-level must lie in (0, 1)")
    if not args.B > 0:
        raise UsageError("--B must be positive")
    dataset = ingest_csv(args.input, {"y": args.y, "m": args.m, "x": args.x, "z": args.z})
    config = FitConfig(max_em_iters=args.max_em_iters, em_tol=args.em_tol, B=args.B,
                       seed=args.seed)
    families = None if args.family == "auto" else [MediatorFamily.parse(args.family)]
    selection = select_model(dataset, config, families=families)
    estimates = effects_with_inference(
        selection.chosen_fit, EffectRequest(args.x1, args.x2, args.cde_m, args.ci_level))
    report = fit_report(args, dataset, selection, estimates)
    _emit(stdout, args.output, report, fit_table)
    return EXIT_OK if report["status"] == "ok" else EXIT_FLAGGED


def run_simulate(args, stdout):
    from dataclasses import replace

    from . import simulate

    if os.path.exists(args.scenario):
        scenario = load_scenario(args.scenario)
    else:
        try:
            scenario = simulate.preset(args.scenario)
        except ValueError as exc:
            raise IngestionError(f"{args.scenario!r} is neither a file nor a preset: {exc}") from None
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["n_reps"] = args.reps
    if changes:
        scenario = replace(scenario, **changes)
    summary = simulate.run_study(scenario)
    report = {"schema": SIMULATE_SCHEMA, "seed": scenario.seed, **summary.as_dict()}
    if args.output == "csv":
        stdout.write(summary.to_csv())
    else:
        _emit(stdout, args.output, report, lambda _r: summary.to_table())
    return EXIT_OK if summary.n_excluded == 0 else EXIT_FLAGGED


def _emit(stdout, mode, report, table_fn):
    if mode in ("table", "both"):
        stdout.write(table_fn(report) + "\n")
    if mode in ("json", "both"):
        stdout.write(dumps(report) + "\n")


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    json_mode = True
    try:
        args = build_parser().parse_args(argv)
        json_mode = args.output in ("json", "both")
        if args.verbose:
            logging.basicConfig(level=logging.DEBUG, stream=stderr)
        if args.command == "fit":
            return run_fit(args, stdout)
        return run_simulate(args, stdout)
    except (UsageError, IngestionError) as exc:
        return _fail(exc, "input_error", EXIT_INPUT, json_mode, stdout, stderr)
    except ZIMediationError as exc:
        return _fail(exc, "estimation_error", EXIT_ESTIMATION, json_mode, stdout, stderr)


def _fail(exc, kind, code, json_mode, stdout, stderr):
    if json_mode:
        stdout.write(dumps(error_report(exc, kind)) + "\n")
    stderr.write(f"zimediate: error: {exc}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
