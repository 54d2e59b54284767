"""``ident`` command line.

Exit status: 0 success, 1 usage or input error, 2 analysis failure (the
report then carries ``status: failed`` and a ``reason``).
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from fractions import Fraction
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .elimination import CannotSolve, Eliminator, NotApplicable
from .identifiability import DegenerateNSE, analyze, compare_with_known, known_results
from .models import ModelError, resolve_model
from .moments import check_applicability, moment_ode, recurrence, render_recurrence_coeff, stencil
from .ou import EigenvaluesNotDistinct, SingularObservedBlock, StationaryUndefined, autocov, conditional_init
from .ou import ou_from_model, stationary_cov, time_cov
from .parsing import ParseError
from .simulation import (
    Init,
    NoMatchedPair,
    SimConfig,
    default_theta,
    init_for,
    matched_parameters,
    plot_report,
    simulate,
    verify_indistinguishable,
    write_paths_csv,
)

SCHEMA_ID = "sdeident.report/1"
ANALYSIS_ERRORS = (NotApplicable, CannotSolve, DegenerateNSE, NoMatchedPair, StationaryUndefined,
                   SingularObservedBlock, EigenvaluesNotDistinct)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def load_schema() -> dict:
    text = resources.files("sdeident").joinpath("data/report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema())


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def inputs_hash(command: str, inputs: dict) -> str:
    blob = json.dumps(_jsonable({"command": command, **inputs}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def make_report(command: str, model, inputs: dict, results: dict, warnings=(), reason: str | None = None) -> dict:
    report = {
        "schema": SCHEMA_ID,
        "version": __version__,
        "command": command,
        "model": model,
        "inputs_hash": inputs_hash(command, inputs),
        "status": "failed" if reason else "ok",
        "results": _jsonable(results),
        "warnings": [str(w) for w in warnings],
    }
    if reason:
        report["reason"] = reason
    validate_report(report)
    return report


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=False)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _read_model(ref: str):
    try:
        return resolve_model(ref)
    except FileNotFoundError as exc:
        raise UsageError(f"model file not found: {ref}") from exc
    except KeyError as exc:
        raise UsageError(str(exc.args[0]) if exc.args else str(exc)) from exc


def _model_source(ref: str) -> str:
    if ref.startswith("builtin:"):
        return ref
    with open(ref) as fh:
        return fh.read()


def _read_theta(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        raw = json.load(fh)
    out = {}
    for k, v in raw.items():
        out[k] = Fraction(v) if isinstance(v, (int, str)) else Fraction(repr(float(v)))
    return out


def _builtin_id(ref: str) -> str | None:
    return ref[len("builtin:"):] if ref.startswith("builtin:") else None


# ---------------------------------------------------------------------------
# commands


def cmd_stencil(args) -> dict:
    model = _read_model(args.model)
    st = stencil(model)
    rec = recurrence(model)
    verdict = check_applicability(model)
    results = {
        "offsets": [list(o) for o in st],
        "coefficients": {f"({p},{q:+d})": render_recurrence_coeff(c) for (p, q), c in sorted(rec.items())},
        "grid": st.grid(),
        "applicable": bool(verdict),
        "reason": verdict.reason,
        "notes": list(verdict.notes),
    }
    if not args.json:
        print(st.grid())
        print("applicable" if verdict else f"not applicable: {verdict.reason}")
        for n in verdict.notes:
            print(f"note: {n}")
    return make_report("stencil", model.name, {"model": _model_source(args.model)}, results, model.warnings)


def cmd_moments(args) -> dict:
    model = _read_model(args.model)
    eqs = []
    for order in range(1, args.max_order + 1):
        for i in range(order, -1, -1):
            j = order - i
            rhs = moment_ode(model, i, j)
            eqs.append({"moment": f"m[{i},{j}]", "rhs": str(rhs)})
            if not args.json:
                print(f"m[{i},{j}]' = {rhs}")
    return make_report("moments", model.name, {"model": _model_source(args.model), "max_order": args.max_order},
                       {"equations": eqs}, model.warnings)


def _nse_payload(nse) -> dict:
    coeffs = {str(sym): str(c) for sym, c in nse.expr.terms.items()}
    if not nse.expr.constant.is_zero():
        coeffs["1"] = str(nse.expr.constant)
    return {
        "order": nse.order,
        "equation": str(nse),
        "coefficients": coeffs,
        "conditions": [f"{c} != 0" for c in nse.conditions],
        "provenance": [f"{t} from {s}'" for t, s in nse.provenance],
    }


def cmd_nse(args) -> dict:
    model = _read_model(args.model)
    inputs = {"model": _model_source(args.model), "order": args.order}
    try:
        elim = Eliminator(model)
        nses = [elim.nse(k) for k in range(1, args.order + 1)]
    except ANALYSIS_ERRORS as exc:
        raise _Failure("nse", model.name, inputs, str(exc)) from exc
    warnings = list(model.warnings)
    for n in nses:
        warnings.extend(n.warnings)
        if not args.json:
            print(f"order {n.order}: {n}")
    return make_report("nse", model.name, inputs, {"nse": [_nse_payload(n) for n in nses]}, warnings)


def cmd_analyze(args) -> dict:
    model = _read_model(args.model)
    inputs = {"model": _model_source(args.model), "max_order": args.max_order, "seed": args.seed,
              "trials": args.trials}
    try:
        res = analyze(model, max_order=args.max_order, seed=args.seed, trials=args.trials)
    except ANALYSIS_ERRORS as exc:
        raise _Failure("analyze", model.name, inputs, str(exc)) from exc
    ident = res.ident
    results = {
        "orders": [{**_nse_payload(o.nse), "combos": [str(c) for c in o.combos]} for o in res.orders],
        "combos": [str(c) for c in res.raw],
        "reduced": ident.texts(),
        "reduction": "heuristic",
        "rank": ident.rank,
        "n_params": len(ident.params),
        "params": list(ident.params),
        "rank_points": [{k: str(v) for k, v in p.items()} for p in ident.rank_points],
        "conditions": [f"{c} != 0" for c in res.conditions],
        "notes": ident.notes,
    }
    bid = _builtin_id(args.model)
    if bid is not None:
        try:
            results["comparison"] = compare_with_known(res, bid, "default", seed=args.seed)
        except KeyError:
            pass
    if not args.json:
        print("reduced set: {" + ", ".join(ident.texts()) + "}", file=sys.stderr)
        print(f"jacobian rank {ident.rank} of {len(ident.params)}", file=sys.stderr)
    return make_report("analyze", model.name, inputs, results, list(model.warnings) + res.warnings)


def cmd_known(args) -> dict:
    try:
        ref = known_results(args.model_id, args.regime)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    results = {"regime": args.regime, "combos": ref.labels or ref.texts(), "expanded": ref.texts(),
               "rank": ref.rank, "params": list(ref.params)}
    if not args.json:
        print("{" + ", ".join(results["combos"]) + "}")
    return make_report("known", args.model_id, {"model_id": args.model_id, "regime": args.regime}, results)


def _parse_grid(text: str) -> list:
    if ":" in text:
        lo, hi, n = text.split(":")
        return list(np.linspace(float(lo), float(hi), int(n)))
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_ou(args) -> dict:
    model = _read_model(args.model)
    theta = _read_theta(args.theta)
    inputs = {"model": _model_source(args.model), "theta": theta, "what": args.what, "t": args.t, "x0": args.x0}
    try:
        sys_ = ou_from_model(model, {k: float(v) for k, v in theta.items()})
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    except ValueError as exc:
        if isinstance(exc, ANALYSIS_ERRORS):
            raise _Failure("ou", model.name, inputs, str(exc)) from exc
        raise UsageError(str(exc)) from exc
    rows = []
    try:
        if args.what == "stationary":
            rows.append((None, stationary_cov(sys_)))
        else:
            grid = _parse_grid(args.t or "0:5:11")
            if args.what == "autocov":
                rows = [(t, autocov(sys_, t)) for t in grid]
            else:
                x0 = args.x0 if args.x0 is not None else theta.get("x0")
                if x0 is None:
                    raise UsageError("--what sigma needs --x0 (or x0 in the theta file)")
                init = conditional_init(sys_, [float(x0)])
                rows = [(t, time_cov(sys_, init, t)) for t in grid]
    except ANALYSIS_ERRORS as exc:
        raise _Failure("ou", model.name, inputs, str(exc)) from exc
    n = sys_.n
    buf = io.StringIO()
    cols = [f"s{i}{j}" for i in range(n) for j in range(n)]
    buf.write(",".join((["t"] if args.what != "stationary" else []) + cols) + "\n")
    for t, M in rows:
        vals = [f"{v:.17g}" for v in M.reshape(-1)]
        buf.write(",".join(([f"{t:.10g}"] if t is not None else []) + vals) + "\n")
    text = buf.getvalue()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    elif not args.json:
        print(text, end="")
    results = {"what": args.what, "n": n, "csv": text}
    return make_report("ou", model.name, inputs, results)


def _sim_config(args) -> SimConfig:
    base = {}
    if getattr(args, "cfg", None):
        with open(args.cfg) as fh:
            base = json.load(fh)
    for key in ("dt", "T", "n_paths", "n_record"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    try:
        return SimConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad simulation config: {exc}") from exc


def cmd_simulate(args) -> dict:
    model = _read_model(args.model)
    theta = _read_theta(args.theta)
    cfg = _sim_config(args)
    inputs = {"model": _model_source(args.model), "theta": theta, "cfg": cfg.to_dict()}
    try:
        paths = simulate(model, theta, cfg)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    except ANALYSIS_ERRORS as exc:
        raise _Failure("simulate", model.name, inputs, str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        with open(args.out, "w") as fh:
            write_paths_csv(paths, fh, args.max_csv_paths)
    warnings = []
    if paths.unreliable:
        warnings.append(f"{paths.clamp_fraction:.3%} of steps clamped a non-PSD noise covariance; unreliable")
    results = {
        "n_paths": paths.n_paths,
        "times": len(paths.times),
        "clamped_steps": paths.clamped,
        "clamp_fraction": paths.clamp_fraction,
        "flagged_paths": int(paths.flagged.sum()) if paths.flagged is not None else 0,
        "out": args.out,
        "mean_x_T": float(paths.x[:, -1].mean()),
    }
    return make_report("simulate", model.name, inputs, results, warnings)


def cmd_verify(args) -> dict:
    model_id = args.model_id
    try:
        model = resolve_model(f"builtin:{model_id}")
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    theta = _read_theta(args.theta) if args.theta else default_theta(model_id, args.seed)
    cfg = _sim_config(args)
    cfg = SimConfig.from_dict({**cfg.to_dict(), "init": {"kind": init_for(model_id, args.regime)}})
    inputs = {"model_id": model_id, "regime": args.regime, "theta": theta, "cfg": cfg.to_dict()}
    try:
        pair = matched_parameters(model_id, args.regime, theta, seed=args.seed)
        report = verify_indistinguishable(model, pair.theta, pair.theta_star, cfg)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    except ANALYSIS_ERRORS as exc:
        raise _Failure("verify", model_id, inputs, str(exc)) from exc
    files = plot_report(report, args.plots, f"{model_id} / {args.regime}") if args.plots else []
    results = {
        "regime": args.regime,
        "theta": pair.theta,
        "theta_star": pair.theta_star,
        "direction": pair.direction,
        "residuals": pair.residuals,
        "seeds": {"theta": cfg.seed, "theta_star": cfg.seed + 1},
        **report.to_dict(),
        "plots": files,
    }
    if not args.json:
        print(f"{model_id}/{args.regime}: {report.verdict}", file=sys.stderr)
        for c in report.observed + report.unobserved:
            kind = "observed" if c.observed else "unobserved"
            print(f"  {kind:10s} {c.name}: max|z| = {c.max_abs_z:.2f}", file=sys.stderr)
    return make_report("verify", model_id, inputs, results, report.notes if report.clamp["unreliable"] else [])


class _Failure(Exception):
    def __init__(self, command, model, inputs, reason):
        super().__init__(reason)
        self.command, self.model, self.inputs, self.reason = command, model, inputs, reason


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ident", description="Structural identifiability of partially observed polynomial SDEs")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--json", nargs="?", const="-", metavar="PATH",
                        help="emit the JSON report (to PATH, or stdout when no path is given)")
        if out:
            sp.add_argument("--out", help="write the JSON report here")

    s = sub.add_parser("stencil", help="recurrence stencil and applicability")
    s.add_argument("model", help="model file or builtin:<id>")
    common(s)

    s = sub.add_parser("moments", help="moment equations")
    s.add_argument("model")
    s.add_argument("--order", "--max-order", dest="max_order", type=int, default=2)
    common(s)

    s = sub.add_parser("nse", help="necessarily satisfied equations")
    s.add_argument("model")
    s.add_argument("--order", "--max-order", dest="order", type=int, default=1)
    common(s)

    s = sub.add_parser("analyze", help="identifiable combinations with a rank certificate")
    s.add_argument("model")
    s.add_argument("--max-order", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=3)
    common(s)

    s = sub.add_parser("ou", help="closed-form OU covariances as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True, help="JSON file of parameter values")
    s.add_argument("--what", choices=["stationary", "autocov", "sigma"], default="stationary")
    s.add_argument("--t", help="time grid: 'lo:hi:n' or comma list")
    s.add_argument("--x0", type=float)
    s.add_argument("--csv", help="write the CSV here instead of stdout")
    common(s)

    s = sub.add_parser("simulate", help="Euler-Maruyama ensemble")
    s.add_argument("model")
    s.add_argument("--theta", required=True)
    s.add_argument("--cfg", help="JSON simulation config")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-paths", dest="n_paths", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--T", type=float)
    s.add_argument("--n-record", dest="n_record", type=int)
    s.add_argument("--out", help="CSV file for the recorded paths")
    s.add_argument("--max-csv-paths", dest="max_csv_paths", type=int, help="only write the first N paths")
    s.add_argument("--json", nargs="?", const="-", metavar="PATH")

    s = sub.add_parser("verify", help="simulate a matched pair and test indistinguishability")
    s.add_argument("model_id")
    s.add_argument("--regime", default="default")
    s.add_argument("--theta")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-paths", dest="n_paths", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--T", type=float)
    s.add_argument("--plots", help="directory for SVG plots")
    common(s)

    s = sub.add_parser("known", help="published identifiable sets")
    s.add_argument("model_id")
    s.add_argument("--regime", default="default")
    common(s)
    return p


COMMANDS = {
    "stencil": cmd_stencil,
    "moments": cmd_moments,
    "nse": cmd_nse,
    "analyze": cmd_analyze,
    "ou": cmd_ou,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "known": cmd_known,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    try:
        report = COMMANDS[args.command](args)
    except (UsageError, ModelError, ParseError) as exc:
        print(f"ident {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except _Failure as exc:
        report = make_report(exc.command, exc.model, exc.inputs, {}, reason=exc.reason)
        print(f"ident {args.command}: analysis failed: {exc.reason}", file=sys.stderr)
        _deliver(args, report)
        return 2
    _deliver(args, report)
    return 0


# commands whose primary output is the report itself
_REPORT_FIRST = {"analyze", "verify"}


def _deliver(args, report: dict) -> None:
    out = getattr(args, "out", None) if args.command != "simulate" else None
    json_arg = getattr(args, "json", None)
    if out:
        _emit(report, out)
    if json_arg and json_arg != "-":
        _emit(report, json_arg)
    elif json_arg == "-" or (args.command in _REPORT_FIRST and not out) or report["status"] == "failed" and not out:
        _emit(report, None)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
