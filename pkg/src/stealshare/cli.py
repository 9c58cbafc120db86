"""Command-line front end.

Every output carries a provenance block (tool version, the parsed command
line and solver tolerances). JSON outputs embed it under ``"provenance"``;
CSV outputs start with ``#``-prefixed comment lines. Given the same arguments
and seed, outputs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, compare, qbd
from .errors import InvalidParameterError, StealShareError
from .phasetype import (
    HyperExpSpec,
    fit_hyperexp,
    moments,
    parse_dist,
    to_descriptor,
    erlang,
)
from .sim import SimConfig, simulate

OUT_DIR_ENV = "STEALSHARE_OUT_DIR"

#: reference validation rows: (lambda, scv, r, reference mean response time)
TABLE1 = [
    (0.5, 0.2, 0.2, 1.5276), (0.5, 0.2, 1, 1.3644), (0.5, 0.2, 5, 1.1514),
    (0.5, 5, 0.2, 3.2285), (0.5, 5, 1, 1.8847), (0.5, 5, 5, 1.1795),
    (0.5, 25, 0.2, 9.9397), (0.5, 25, 1, 2.8406), (0.5, 25, 5, 1.1855),
    (0.75, 0.2, 0.2, 2.5451), (0.75, 0.2, 1, 2.0148), (0.75, 0.2, 5, 1.4142),
    (0.75, 5, 0.2, 8.1885), (0.75, 5, 1, 4.6246), (0.75, 5, 5, 1.6517),
    (0.75, 25, 0.2, 31.5323), (0.75, 25, 1, 14.7129), (0.75, 25, 5, 1.8058),
    (0.875, 0.2, 0.2, 4.5552), (0.875, 0.2, 1, 3.2503), (0.875, 0.2, 5, 1.8774),
    (0.875, 5, 0.2, 18.1843), (0.875, 5, 1, 10.5504), (0.875, 5, 5, 3.1684),
    (0.875, 25, 0.2, 74.8468), (0.875, 25, 1, 40.5751), (0.875, 25, 5, 6.9646),
]


def table1_dist(scv: float):
    """Erlang-5 for SCV 1/5, otherwise the f = 1/2 hyperexponential."""
    if scv < 1:
        return erlang(round(1 / scv))
    return fit_hyperexp(HyperExpSpec(scv, 0.5))


def parse_grid(text: str) -> list[float]:
    """``start:stop:count[:log]`` or a comma-separated list."""
    if ":" not in text:
        return [float(x) for x in text.split(",") if x]
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("lin", "log")):
        raise InvalidParameterError(f"grid must be start:stop:count[:log], got {text!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise InvalidParameterError("grid count must be >= 1")
    if len(parts) == 4 and parts[3] == "log":
        if start <= 0 or stop <= 0:
            raise InvalidParameterError("log grid needs positive endpoints")
        return np.geomspace(start, stop, count).tolist()
    return np.linspace(start, stop, count).tolist()


def _tolerances(args) -> dict:
    return {
        "G_tol": qbd.G_TOL,
        "residual_tol": qbd.RESIDUAL_TOL,
        "bisect_tol": getattr(args, "tol", None) or compare.BISECT_TOL,
        "tie_tol": compare.TIE_TOL,
        "root_tol": bounds.ROOT_TOL,
    }


def _provenance(args) -> dict:
    echo = {
        k: to_descriptor(v) if hasattr(v, "descriptor") else v
        for k, v in sorted(vars(args).items())
        if k != "func"
    }
    return {"tool": "stealshare", "version": __version__, "arguments": echo, "tolerances": _tolerances(args)}


def _json_doc(args, payload) -> str:
    return json.dumps({"provenance": _provenance(args), **payload}, indent=2, sort_keys=True) + "\n"


def _csv_doc(args, header, rows) -> str:
    buf = io.StringIO()
    for line in json.dumps(_provenance(args), sort_keys=True).splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _out_path(path: str | None) -> Path | None:
    if path is None or path == "-":
        return None
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _emit(args, text: str) -> None:
    p = _out_path(args.out)
    if p is None:
        sys.stdout.write(text)
    else:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def _nan_to_none(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


# commands ----------------------------------------------------------------------


def cmd_analyze(args) -> str:
    sol = qbd.solve(args.dist, args.lam, args.r, tol=qbd.G_TOL)
    if args.format == "csv":
        rows = list(enumerate(sol.levels(args.levels).tolist()))
        return _csv_doc(args, ["level", "prob"], rows)
    payload = sol.to_dict()
    payload.update(
        mean_queue_length=qbd.mean_queue_length(sol),
        tail_probs={str(k): qbd.tail_prob(sol, k) for k in range(1, 6)},
        lambda0_forms=qbd.lambda0_forms(sol),
        balance_residual=qbd.balance_residual(sol, max(args.levels, 3)),
    )
    return _json_doc(args, {"solution": payload})


def cmd_decide(args) -> str:
    v = compare.decide(args.dist, args.lam, args.r_overall, with_r_share=args.with_r_share, tol=args.tol)
    return _json_doc(args, {"verdict": v.to_dict()})


def cmd_boundary(args) -> str:
    curve = compare.boundary_sweep(args.dist, parse_grid(args.r_grid), args.tol)
    viol = curve.monotonicity_violations()
    if args.format == "json":
        return _json_doc(
            args,
            {
                "curve": {
                    "dist": curve.dist,
                    "samples": [[r, _nan_to_none(ls)] for r, ls in curve.samples],
                    "iterations": curve.iterations,
                    "residuals": [_nan_to_none(x) for x in curve.residuals],
                    "failures": curve.failures,
                    "monotonicity_violations": viol,
                }
            },
        )
    rows = [(r, ls, it, res) for (r, ls), it, res in zip(curve.samples, curve.iterations, curve.residuals)]
    return _csv_doc(args, ["r_overall", "lambda_star", "iterations", "residual"], rows)


def cmd_bounds(args) -> str:
    dist = None if args.exp_only else args.dist
    if dist is None and not args.exp_only:
        raise InvalidParameterError("bounds needs --dist unless --exp-only is given")
    grid = parse_grid(args.r_grid) if args.r_grid else [args.r_overall]
    reports = [bounds.report(dist, r) for r in grid]
    if args.format == "csv":
        kinds = [rep.kind.value for rep in reports[0] if rep.r_overall is not None]
        rows = []
        for r, reps in zip(grid, reports):
            by_kind = {rep.kind.value: rep.value for rep in reps}
            rows.append([r] + [by_kind.get(k, "") for k in kinds])
        return _csv_doc(args, ["r_overall"] + kinds, rows)
    return _json_doc(args, {"bounds": [[rep.to_dict() for rep in reps] for reps in reports]})


def cmd_simulate(args) -> str:
    cfg = SimConfig(
        args.dist, args.lam, args.r, args.strategy, args.n_servers, args.horizon, args.warmup,
        args.runs, args.seed, args.force,
    )
    rep = simulate(cfg)
    if args.runs_csv:
        p = _out_path(args.runs_csv)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(rep.runs_csv())
    payload = {"report": rep.to_dict()}
    try:
        sol = qbd.solve(args.dist, args.lam, args.r)
        payload["mean_field"] = {"mean_response": qbd.mean_response(sol)}
    except StealShareError:
        pass
    return _json_doc(args, payload)


def table1_rows(which: str):
    keep = {"erlang": lambda scv: scv < 1, "hyperexp": lambda scv: scv > 1, "all": lambda scv: True}[which]
    return [row for row in TABLE1 if keep(row[1])]


def cmd_validate_table1(args) -> str:
    rows = []
    for i, (lam, scv, r, reference) in enumerate(table1_rows(args.rows)):
        d = table1_dist(scv)
        ode = qbd.mean_response(qbd.solve(d, lam, r))
        row = [lam, scv, r, reference, ode]
        if args.runs > 0:
            horizon = args.horizon if args.horizon else (25000.0 if scv >= 25 else 5000.0)
            cfg = SimConfig(d, lam, r, args.strategy, args.n_servers, horizon, args.warmup, args.runs, args.seed + i)
            rep = simulate(cfg)
            row += [rep.mean_response, rep.ci_halfwidth, abs(rep.mean_response - ode) / ode]
        rows.append(row)
    header = ["lambda", "scv", "r", "reference", "ode"]
    if args.runs > 0:
        header += ["simul", "conf", "rel_error"]
    if args.format == "json":
        return _json_doc(args, {"table": [dict(zip(header, [_nan_to_none(x) for x in row])) for row in rows]})
    return _csv_doc(args, header, rows)


def cmd_fit(args) -> str:
    d = fit_hyperexp(HyperExpSpec(args.scv, args.f)) if args.scv is not None else args.dist
    if d is None:
        raise InvalidParameterError("fit needs --scv or --dist")
    mean, scv = moments(d)
    payload = {
        "descriptor": to_descriptor(d),
        "alpha": d.alpha.tolist(),
        "S": d.S.tolist(),
        "hazard": d.hazard,
        "mean": mean,
        "scv": scv,
    }
    return _json_doc(args, {"distribution": payload})


# parser --------------------------------------------------------------------------


def _dist_arg(text):
    try:
        return parse_dist(text)
    except (StealShareError, OSError, json.JSONDecodeError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stealshare", description="Randomized work stealing versus sharing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt="json", dist_required=True):
        sp.add_argument("--dist", type=_dist_arg, required=dist_required,
                        help="exp | erlang:K | hypoexp:R1,R2 | hyperexp:SCV[:F] | JSON | @file.json")
        sp.add_argument("--out", default=None, help=f"output file (relative paths resolve under ${OUT_DIR_ENV})")
        sp.add_argument("--format", choices=("json", "csv"), default=fmt)
        sp.add_argument("--tol", type=float, default=compare.BISECT_TOL)

    sp = sub.add_parser("analyze", help="solve the mean-field fixed point")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--levels", type=int, default=20, help="levels in the CSV / balance check")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("decide", help="stealing or sharing at a given overall probe rate")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--r-overall", type=float, required=True)
    sp.add_argument("--with-r-share", action="store_true")
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("boundary", help="boundary load lambda* over an r_overall grid")
    common(sp, fmt="csv")
    sp.add_argument("--r-grid", required=True, help="start:stop:count[:log] or comma list")
    sp.set_defaults(func=cmd_boundary)

    sp = sub.add_parser("bounds", help="analytic bounds on the boundary")
    common(sp, dist_required=False)
    sp.add_argument("--exp-only", action="store_true", help="distribution-free bounds only")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--r-overall", type=float)
    g.add_argument("--r-grid")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("simulate", help="N-server discrete-event simulation")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--strategy", choices=("steal", "share"), default="steal")
    sp.add_argument("--n-servers", type=int, default=1000)
    sp.add_argument("--horizon", type=float, default=5000.0)
    sp.add_argument("--warmup", type=float, default=0.33, help="warm-up fraction of the horizon")
    sp.add_argument("--runs", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--force", action="store_true", help="simulate even if lambda >= 1")
    sp.add_argument("--runs-csv", default=None, help="write per-run CSV here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate-table1", help="fixed point versus simulation on the reference rows")
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("json", "csv"), default="csv")
    sp.add_argument("--rows", choices=("erlang", "hyperexp", "all"), default="all")
    sp.add_argument("--strategy", choices=("steal", "share"), default="steal")
    sp.add_argument("--n-servers", type=int, default=1000)
    sp.add_argument("--horizon", type=float, default=None, help="default 5000, or 25000 for SCV 25")
    sp.add_argument("--warmup", type=float, default=0.33)
    sp.add_argument("--runs", type=int, default=20, help="0 skips simulation")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_validate_table1)

    sp = sub.add_parser("fit", help="phase-type representation of a distribution")
    sp.add_argument("--scv", type=float)
    sp.add_argument("--f", type=float, default=0.5)
    sp.add_argument("--dist", type=_dist_arg)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
        _emit(args, text)
    except StealShareError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 1
    return 0

