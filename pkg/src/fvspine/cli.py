"""Command line interface.

    fvspine harmonic eval|grid
    fvspine conformal check
    fvspine mc h|drift|strip|quarter
    fvspine fv run|occupancy|stationarity
    fvspine report thm22|thm23|thm24

Every command prints (or writes to --output) a JSON object or CSV table that
carries the command, the full parameter set, the seed and the package version.
The only run-dependent field is ``metadata`` (a timestamp); everything else is
byte-identical across reruns with the same arguments.

Exit codes: 0 all checks passed, 2 a numeric check failed, 3 precision or
convergence failure, 4 bad arguments.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys

import numpy as np

from . import __version__
from . import conformal, fourier, stationary
from . import montecarlo as mc
from .errors import (
    BoundaryError,
    ConvergenceError,
    DomainError,
    EmptyPathError,
    EstimationError,
    InsufficientEventsError,
    PrecisionError,
)

EXIT_OK, EXIT_CHECK, EXIT_PRECISION, EXIT_ARGS = 0, 2, 3, 4
PI = math.pi
DRIFT_TARGET_NOTE = "h_x/h from the Fourier series"

DEFAULTS = {
    "x": PI / 4, "y": PI / 4, "eps": "0.05,0.1,0.2", "tol": 1e-10, "terms": None,
    "dt": 1e-4, "dt_probe": 5e-4, "samples": 1_000_000, "horizon": 20_000.0, "reps": 4,
    "seed": 0, "format": "json", "output": None, "threads": None, "step": PI / 64,
    "stride": 100, "dump": "events", "cond_horizon": None,
}
# the drift witness needs enough runs for its 3-sigma interval to clear cot(pi/4) = 1
COMMAND_SAMPLES = {"report thm22": 4_000_000}


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _positive(kind):
    def conv(s):
        v = kind(float(s)) if kind is int else kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _eps_list(s):
    try:
        vals = [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {s!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty eps list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--x", type=float, default=DEFAULTS["x"])
    common.add_argument("--y", type=float, default=DEFAULTS["y"])
    common.add_argument("--eps", type=_eps_list, default=_eps_list(DEFAULTS["eps"]))
    common.add_argument("--tol", type=_positive(float), default=DEFAULTS["tol"])
    common.add_argument("--terms", type=_positive(int), default=None)
    common.add_argument("--dt", type=_positive(float), default=DEFAULTS["dt"])
    common.add_argument("--dt-probe", dest="dt_probe", type=_positive(float),
                        default=DEFAULTS["dt_probe"])
    common.add_argument("--samples", type=_positive(int), default=None)
    common.add_argument("--horizon", type=_positive(float), default=DEFAULTS["horizon"])
    common.add_argument("--cond-horizon", dest="cond_horizon", type=_positive(float), default=None)
    common.add_argument("--reps", type=_positive(int), default=DEFAULTS["reps"])
    common.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    common.add_argument("--format", choices=("json", "csv"), default=DEFAULTS["format"])
    common.add_argument("--output", default=None)
    common.add_argument("--threads", type=_positive(int), default=None)
    common.add_argument("--step", type=_positive(float), default=DEFAULTS["step"])
    common.add_argument("--stride", type=int, default=DEFAULTS["stride"],
                        help="record every N-th step in fv run path dumps")
    common.add_argument("--dump", choices=("events", "path"), default=DEFAULTS["dump"])

    p = _Parser(prog="fvspine", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"fvspine {__version__}")
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Parser)
    for group, actions in COMMANDS.items():
        g = sub.add_parser(group)
        gs = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
        for action in actions:
            gs.add_parser(action, parents=[common])
    return p


# ---------------------------------------------------------------- output


class Outcome:
    """Results of one command: summary fields, optional table rows, pass flag."""

    def __init__(self, results: dict, passed: bool = True, columns=None, rows=None):
        self.results = results
        self.passed = passed
        self.columns = columns
        self.rows = rows


def _clean(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _params(args) -> dict:
    keys = ("x", "y", "eps", "tol", "terms", "dt", "dt_probe", "samples", "horizon",
            "cond_horizon", "reps", "seed", "format", "output", "threads", "step", "stride", "dump")
    params = {k: getattr(args, k) for k in keys}
    params["threads"] = mc.resolve_threads(args.threads)
    return _clean(params)


def _metadata() -> dict:
    return {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}


def render(command: str, args, out: Outcome) -> str:
    params = _params(args)
    if args.format == "json":
        doc = {
            "command": command,
            "version": __version__,
            "seed": args.seed,
            "params": params,
            "passed": out.passed,
            "results": _clean(out.results),
        }
        if out.rows is not None:
            doc["rows"] = [dict(zip(out.columns, _clean(list(r)))) for r in out.rows]
        doc["metadata"] = _metadata()
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    head = ["command", "version", "seed", "params"]
    prov = [command, __version__, args.seed, json.dumps(params, sort_keys=True)]
    if out.rows is not None:
        cols, rows = list(out.columns), [list(r) for r in out.rows]
    else:
        flat = _clean(out.results)
        cols = list(flat) + ["passed"]
        rows = [[json.dumps(v) if isinstance(v, (list, dict)) else v for v in flat.values()]
                + [out.passed]]
    w.writerow(head + cols + ["metadata"])
    meta = json.dumps(_metadata())
    for r in rows:
        w.writerow(prov + [_csv_cell(v) for v in r] + [meta])
    return buf.getvalue()


def _csv_cell(v):
    v = _clean(v)
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


# ---------------------------------------------------------------- commands


def harmonic_eval(args) -> Outcome:
    p = fourier.SquarePoint(args.x, args.y)
    hf = fourier.eval_h(p, args.tol, args.terms)
    hxf = fourier.eval_hx(p, args.tol, args.terms)
    h_c, hx_c, hy_c = conformal.grad_h_at(complex(p.x, p.y), tol=min(args.tol, 1e-11))
    res = {
        "x": p.x, "y": p.y,
        "h_fourier": hf.value, "h_tail_bound": hf.tail_bound, "h_terms": hf.terms_used,
        "hx_fourier": hxf.value, "hx_tail_bound": hxf.tail_bound, "hx_terms": hxf.terms_used,
        "h_conformal": h_c, "hx_conformal": hx_c, "hy_conformal": hy_c,
        "h_discrepancy": abs(hf.value - h_c), "hx_discrepancy": abs(hxf.value - hx_c),
    }
    cot = 1.0 / math.tan(p.x)
    if hf.value > 10 * hf.tail_bound:
        res["gap_fourier"] = cot - hxf.value / hf.value
        res["gap_conformal"] = cot - hx_c / h_c
        res["gap_discrepancy"] = abs(res["gap_fourier"] - res["gap_conformal"])
    else:
        raise PrecisionError("h too small at this point to form h_x/h")
    return Outcome(res)


def harmonic_grid(args) -> Outcome:
    rep = fourier.verify_thm23(args.step, tol=1e-6, series_tol=args.tol)
    rows = [(float(x), float(y), float(rep.gaps[i, j]))
            for i, x in enumerate(rep.xs) for j, y in enumerate(rep.xs)]
    res = {"grid_step": args.step, "n_points": rep.n_points, "n_failures": len(rep.failures),
           "min_gap": rep.min_gap, "argmin": list(rep.argmin) if rep.argmin else None}
    if args.format == "csv":
        return Outcome(res, rep.passed, ("x", "y", "gap"), rows)
    return Outcome(res, rep.passed)


def conformal_check(args) -> Outcome:
    k = conformal.map_constants()
    cr = conformal.check_constants(seed=args.seed)
    p43 = conformal.verify_prop43()
    p44 = conformal.verify_prop44()
    roots = conformal.p_poly_roots()
    res = {
        "c": cr.c, "c_via_agm": cr.c_via_agm, "c_reference": 1.69443,
        "diagonal_identity": cr.diagonal_identity,
        "diagonal_identity_error": abs(cr.diagonal_identity - math.sqrt(2) * PI),
        "roundtrip_max_error": cr.roundtrip_max_error, "ray_max_error": cr.ray_max_error,
        "prop43_min_identity": p43.min_identity, "prop43_monotone_violations": len(p43.monotone_violations),
        "prop44_max_K": p44.max_K, "prop44_K_left": p44.K_left, "prop44_K_right": p44.K_right,
        "t0": roots.t0, "t2_roots": [roots.small, roots.large], "t2_root_product": roots.small * roots.large,
        "p_at_t0": conformal.p_poly(roots.t0, k),
    }
    checks = [
        abs(cr.c - 1.69443) <= 1e-5,
        res["diagonal_identity_error"] <= 1e-10,
        cr.roundtrip_max_error <= 1e-10,
        cr.ray_max_error <= 1e-10,
        p43.passed, p44.passed,
        -1 < roots.t0 < 0,
    ]
    return Outcome(res, all(checks))


def mc_h(args) -> Outcome:
    target = fourier.eval_h((args.x, args.y), 1e-12).value
    mean, se = mc.estimate_h(args.x, args.y, args.samples, args.seed, args.dt, args.threads)
    res = {"x": args.x, "y": args.y, "estimate": mean, "std_error": se, "analytic": target,
           "z_score": (mean - target) / se}
    return Outcome(res, abs(mean - target) <= 3 * se)


def _drift(args) -> tuple[dict, bool]:
    p = fourier.SquarePoint(args.x, args.y)
    h = fourier.eval_h(p, 1e-12).value
    target = fourier.eval_hx(p, 1e-12).value / h
    est = mc.estimate_drift_h(p.x, p.y, args.dt_probe, args.samples, args.seed, args.dt, args.threads)
    band = abs(est.mean - est.half_mean)
    lo, hi = est.interval(3.0)
    res = {
        "x": p.x, "y": p.y, "estimate": est.mean, "std_error": est.std_error,
        "estimate_half_probe": est.half_mean, "std_error_half_probe": est.half_std_error,
        "bias_band": band, "n_qualifying": est.n_qualifying, "n_runs": est.n_runs,
        "analytic": target, "ci_low": lo, "ci_high": hi, "cot_x": 1.0 / math.tan(p.x),
    }
    consistent = abs(est.mean - target) <= 3 * est.std_error + band
    res["consistent"] = consistent
    return res, consistent


def mc_drift(args) -> Outcome:
    res, ok = _drift(args)
    return Outcome(res, ok)


def mc_strip(args) -> Outcome:
    spec = stationary.HarmonicMeasureSpec.quarter_as_strip(args.x)
    est = stationary.mc_strip(spec, args.samples, args.seed, args.dt, args.threads)
    exact = stationary.hm_strip(spec)
    res = {"a": spec.a, "r": spec.r, "b": spec.b, "c": spec.c, "estimate": est.mean,
           "std_error": est.std_error, "analytic": exact}
    return Outcome(res, est.within(exact))


def mc_quarter(args) -> Outcome:
    est = stationary.mc_quarter(args.x, args.y, args.samples, args.seed, args.dt, args.threads)
    bound = stationary.hm_quarter_bound(args.x, args.y)
    res = {"x": args.x, "y": args.y, "estimate": est.mean, "std_error": est.std_error,
           "bound": bound, "equality_case": args.x == args.y}
    ok = est.within(bound) if args.x == args.y else est.mean <= bound + 3 * est.std_error
    return Outcome(res, ok)


def fv_run(args) -> Outcome:
    stride = args.stride if args.dump == "path" else 0
    run = mc.run_fv(args.x, args.y, args.horizon, mc.RngSeed(args.seed), args.dt,
                    record_stride=max(stride, 0))
    res = {"n_events": run.n_events, "end_time": run.end_time, "ties": run.ties, "steps": run.steps}
    if args.dump == "path":
        rows = list(zip(run.times, run.x1, run.x2, run.spine_flag))
        return Outcome(res, True, ("time", "x1", "x2", "spine_flag"), rows)
    rows = [(e.k, e.T, e.m, e.Y) for e in run.events()]
    return Outcome(res, True, ("k", "T_k", "m_k", "Y_k"), rows)


def fv_occupancy(args) -> Outcome:
    ens = stationary.fv_ensemble(args.horizon, args.reps, args.seed, args.eps, args.dt,
                                 threads=args.threads)
    m, s = ens.spine_mean(), ens.spine_se()
    rows = [(e, float(m[j]), float(s[j]), stationary.occupation_conditioned(e))
            for j, e in enumerate(args.eps)]
    res = {"n_events": int(ens.n_events.sum()), "observed_time": float(ens.spine_time.sum())}
    return Outcome(res, True, ("eps", "spine_emp", "spine_se", "cond_analytic"), rows)


def fv_stationarity(args) -> Outcome:
    ens = stationary.fv_ensemble(args.horizon, args.reps, args.seed, (), args.dt,
                                 threads=args.threads)
    rep = stationary.stationarity_report(ens)
    res = {"ks_statistic": rep.ks_statistic, "ks_pvalue": rep.ks_pvalue, "n_ks": rep.n_ks,
           "ks_thin": rep.thin, "tv_green": rep.tv, "hist_samples": rep.hist_samples,
           "nbins": rep.nbins, "n_events": int(ens.n_events.sum())}
    return Outcome(res, rep.passed)


def report_thm22(args) -> Outcome:
    q = (PI / 4, PI / 4)
    gap_f = fourier.drift_gap_evaluation(q, args.tol)
    gap_c = conformal.drift_gap_conformal(q)
    args.x, args.y = q
    drift, consistent = _drift(args)
    res = {
        "gap_fourier": gap_f.value, "gap_fourier_bound": gap_f.tail_bound,
        "gap_conformal": gap_c, "gap_discrepancy": abs(gap_f.value - gap_c),
        "first_term_bound": fourier.first_term_bound(),
        "gap_lower_bound": 1 - 2 * fourier.first_term_bound(),
        **{f"drift_{k}": v for k, v in drift.items() if k not in ("x", "y")},
        "ci_excludes_cot": drift["ci_high"] < 1.0,
    }
    ok = consistent and res["ci_excludes_cot"] and gap_f.value > 0 and res["gap_discrepancy"] <= 1e-9
    return Outcome(res, ok)


def report_thm23(args) -> Outcome:
    rep = fourier.verify_thm23(args.step, tol=1e-6, series_tol=args.tol)
    p43 = conformal.verify_prop43()
    p44 = conformal.verify_prop44()
    res = {"grid_step": args.step, "n_points": rep.n_points, "n_failures": len(rep.failures),
           "min_gap": rep.min_gap, "argmin": list(rep.argmin) if rep.argmin else None,
           "prop43_min_identity": p43.min_identity,
           "prop43_monotone_violations": len(p43.monotone_violations),
           "prop44_max_K": p44.max_K, "prop44_K_left": p44.K_left, "prop44_K_right": p44.K_right}
    return Outcome(res, rep.passed and p43.passed and p44.passed)


def report_thm24(args) -> Outcome:
    rep = stationary.thm24_experiment(args.eps, args.horizon, args.reps, args.seed, args.dt,
                                      cond_horizon=args.cond_horizon, threads=args.threads)
    rows = [[getattr(r, c) for c in stationary.OccupationReport.COLUMNS] for r in rep.rows]
    res = {"cond_horizon": rep.cond_horizon, "any_significant": rep.any_significant,
           "ratio_grows": rep.ratio_grows,
           "ratios": [r.ratio for r in sorted(rep.rows, key=lambda r: r.eps)],
           "lower_bound_crossover": stationary.lower_bound_crossover()}
    return Outcome(res, rep.any_significant and rep.ratio_grows,
                   stationary.OccupationReport.COLUMNS, rows)


COMMANDS = {
    "harmonic": {"eval": harmonic_eval, "grid": harmonic_grid},
    "conformal": {"check": conformal_check},
    "mc": {"h": mc_h, "drift": mc_drift, "strip": mc_strip, "quarter": mc_quarter},
    "fv": {"run": fv_run, "occupancy": fv_occupancy, "stationarity": fv_stationarity},
    "report": {"thm22": report_thm22, "thm23": report_thm23, "thm24": report_thm24},
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None:
            mc.resolve_threads(args.threads)
        command = f"{args.group} {args.action}"
        if args.samples is None:
            args.samples = COMMAND_SAMPLES.get(command, DEFAULTS["samples"])
        out = COMMANDS[args.group][args.action](args)
    except (ArgumentError, DomainError, BoundaryError, EmptyPathError,
            InsufficientEventsError) as exc:
        print(f"fvspine: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (PrecisionError, ConvergenceError, EstimationError) as exc:
        print(f"fvspine: numerical failure: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    text = render(command, args, out)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if out.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
