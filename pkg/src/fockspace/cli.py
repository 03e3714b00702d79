"""Command line entry point: ``fockspace <command> [options]``.

Exit status is 0 on success, 1 when a verification suite fails and 2 for
bad input (unknown weight, malformed point, table too short, ...).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import build_lattice, distance, lattice_checks, metric, save_lattice
from .harness import SUITES, TableCache, _jsonable, emit_report, load_config, report_payload, run_suites
from .kernel import eval_kernel_scaled, log_derivatives, required_dmax
from .moments import build_moment_table, save_table
from .operators import (
    NormalizedBasis,
    PointMasses,
    RadialMeasure,
    besov_diagnostic,
    carleson_test,
    hankel_spectrum,
    mo_profile,
    toeplitz_diag,
)
from .weights import check_hypotheses, parse_weight

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _point(text: str, n: int) -> np.ndarray:
    try:
        z = np.array([complex(s.replace(" ", "")) for s in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"malformed point {text!r}; use e.g. '3+1j' or '5,0'") from exc
    if z.size != n:
        raise UsageError(f"point {text!r} has {z.size} coordinates, expected n={n}")
    return z


def _clean(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray) and np.iscomplexobj(obj):
        return [[float(v.real), float(v.imag)] for v in obj.ravel()]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return _jsonable(obj)


class Output:
    """Collects one JSON document or one CSV table and writes it once."""

    def __init__(self, args):
        self.fmt = args.format
        self.path = Path(args.out) if getattr(args, "out", None) else None

    def emit(self, payload: dict, header=None, rows=None):
        if self.fmt == "csv" and rows is not None:
            buf = io.StringIO()
            wr = csv.writer(buf)
            wr.writerow(header)
            wr.writerows([[_jsonable(v) for v in row] for row in rows])
            text = buf.getvalue()
        else:
            text = json.dumps(_clean(payload), indent=2) + "\n"
        if self.path:
            self.path.write_text(text)
        else:
            sys.stdout.write(text)


def _cache(args) -> TableCache:
    return TableCache(args.cache or os.environ.get("FOCKSPACE_CACHE") or None)


def _table(args, r_max: float, n=None, extra: int = 0):
    w = parse_weight(args.weight)
    n = args.n if n is None else n
    d_max = args.dmax if args.dmax is not None else required_dmax(w, r_max, n) + extra
    return _cache(args).get(w, n, d_max, args.method)


# ---------------------------------------------------------------- commands


def cmd_weight_validate(args, out):
    w = parse_weight(args.weight)
    rep = check_hypotheses(w)
    x = np.geomspace(1e-3, 1e3, 200)
    signs = {
        "psi1_positive": bool(np.all(w.psi1(x) > 0)),
        "psi2_nonnegative": bool(np.all(w.psi2(x) >= 0)),
        "psi3_nonnegative": bool(np.all(w.psi3(x) >= 0)),
    }
    out.emit({"weight": w.label, "description": w.description, "signs": signs, "smoothness": rep,
              "alpha": rep.alpha})
    return EXIT_OK


def cmd_moments_build(args, out):
    w = parse_weight(args.weight)
    if args.dmax is None:
        raise UsageError("moments build needs --dmax")
    table = build_moment_table(w, args.n, args.dmax, method=args.method)
    if args.out and args.format == "json":
        save_table(table, args.out)
        sys.stdout.write(json.dumps({"weight": w.label, "n": table.n, "dmax": table.d_max,
                                     "method": table.method, "file": str(args.out)}) + "\n")
        return EXIT_OK
    rows = [(d, v, e) for d, (v, e) in enumerate(zip(table.log_s, table.err_est))]
    out.emit({"weight": w.label, "n": table.n, "dmax": table.d_max, "method": table.method,
              "logS": table.log_s, "errEst": table.err_est}, ("d", "logS", "errEst"), rows)
    return EXIT_OK


def cmd_kernel_eval(args, out):
    table = _table(args, max(args.r))
    rows = []
    for r in args.r:
        v = eval_kernel_scaled(table, r, args.theta)
        kp, cv = log_derivatives(table, r, "auto") if args.theta == 0 else (math.nan, math.nan)
        rows.append((r, args.theta, v.log_modulus, v.phase, v.sigma, v.terms_used, v.truncation_bound,
                     v.roundoff_bound, kp, cv))
    header = ("r", "theta", "logModulus", "phase", "sigma", "termsUsed", "truncationBound",
              "roundoffBound", "kpOverK", "curvature")
    out.emit({"weight": table.weight.label, "n": table.n, "rows": [dict(zip(header, row)) for row in rows]},
             header, rows)
    return EXIT_OK


def cmd_metric_eval(args, out):
    z, xi = _point(args.z, args.n), _point(args.xi, args.n)
    table = _table(args, float(np.vdot(z, z).real))
    s = metric(table, z, xi)
    out.emit({"weight": table.weight.label, "n": table.n, "z": z, "xi": xi, "beta2": s.beta2,
              "alpha2": s.alpha2, "ratio": s.ratio})
    return EXIT_OK


def cmd_distance(args, out):
    z, w2 = _point(args.z, args.n), _point(args.w, args.n)
    reach = max(np.linalg.norm(z), np.linalg.norm(w2)) + np.linalg.norm(z - w2)
    table = _table(args, 1.2 * reach**2 + 1)
    res = distance(table, z, w2, method=args.method_distance)
    out.emit({"weight": table.weight.label, "n": table.n, "z": z, "w": w2, "method": args.method_distance,
              "rhoHat": res.rho_hat, "kind": res.kind})
    return EXIT_OK


def cmd_lattice_build(args, out):
    table = _table(args, 1.2 * args.R**2 + 1)
    lat = build_lattice(table, args.R, args.r, backend=args.backend, layout=args.layout)
    checks = lattice_checks(lat, table)
    if args.out:
        save_lattice(lat, args.out)
    payload = {"weight": table.weight.label, "R": args.R, "r": args.r, "backend": args.backend,
               "layout": args.layout, "checks": checks}
    if args.out:
        payload["file"] = str(args.out)
    sys.stdout.write(json.dumps(_clean(payload), indent=2) + "\n")
    return EXIT_OK


def cmd_hankel_spectrum(args, out):
    w = parse_weight(args.weight)
    d_max = args.dmax if args.dmax is not None else 1000
    table = _cache(args).get(w, 1, d_max + args.m + 1, args.method)
    hs = hankel_spectrum(NormalizedBasis(table), args.m, d_max)
    out.emit({"weight": w.label, **hs.as_dict()}, ("d", "lambda"), list(enumerate(hs.lam)))
    return EXIT_OK


def _grid(args):
    return np.linspace(0.0, args.rho_max, args.points)


def cmd_mo_profile(args, out):
    table = _table(args, args.rho_max**2, n=1, extra=args.m + 1)
    mo = mo_profile(NormalizedBasis(table), args.m, _grid(args))
    rows = list(zip(mo.radii, mo.mo_squared, mo.mo))
    out.emit({"weight": table.weight.label, "m": args.m, "bmoSup": mo.bmo_sup, "tailSlope": mo.tail_slope,
              "bmoVerdict": mo.bmo_verdict, "vmoVerdict": mo.vmo_verdict,
              "rows": [dict(zip(("rho", "moSquared", "mo"), r)) for r in rows]},
             ("rho", "moSquared", "mo"), rows)
    return EXIT_OK


def cmd_carleson(args, out):
    grid = _grid(args)
    lat = None
    if args.measure == "lattice":
        table = _table(args, 1.2 * args.R**2 + 1, n=1)
        lat = build_lattice(table, args.R, args.r)
        measure = PointMasses.lattice_measure(table, lat.points)
        grid = np.linspace(0.0, min(args.rho_max, 0.7 * args.R), args.points) * np.exp(0.3j)
    else:
        table = _table(args, args.rho_max**2, n=1)
        if args.measure == "lebesgue":
            measure = RadialMeasure.lebesgue()
        else:
            w = table.weight
            measure = RadialMeasure("density exp(Psi/2)", lambda x: 0.5 * w.psi(x))
    rep = carleson_test(NormalizedBasis(table), measure, grid, lattice=lat)
    rows = list(zip(rep.radii, rep.log_condition_ii))
    payload = {"weight": table.weight.label, "measure": rep.measure, "verdict": rep.verdict,
               "tailSlope": rep.tail_slope, "conditionIISup": rep.condition_ii_sup,
               "ratioSpread": rep.ratio_spread, "rows": [{"rho": a, "logConditionII": b} for a, b in rows]}
    out.emit(payload, ("rho", "logConditionII"), rows)
    return EXIT_OK


def cmd_toeplitz(args, out):
    w = parse_weight(args.weight)
    d_max = args.dmax if args.dmax is not None else 60
    table = _cache(args).get(w, 1, d_max, args.method)
    measure = RadialMeasure.lebesgue(args.radius)
    td = toeplitz_diag(NormalizedBasis(table), measure, d_max)
    out.emit({"weight": w.label, "measure": measure.name, "entries": td.entries,
              "schatten": {str(p): asdict(v) for p, v in td.schatten.items()}},
             ("d", "entry"), list(enumerate(td.entries)))
    return EXIT_OK


def cmd_besov(args, out):
    table = _table(args, 100.0, n=1)
    rows = []
    for p in args.p:
        b = besov_diagnostic(table, args.m, p)
        rows.append((p, b.tail_exponent, b.tail_verdict, b.full_integral, b.truncated_integral))
    header = ("p", "tailExponent", "tailVerdict", "fullIntegral", "truncatedIntegral")
    out.emit({"weight": table.weight.label, "m": args.m, "rows": [dict(zip(header, r)) for r in rows]},
             header, rows)
    return EXIT_OK


def cmd_verify(args, out):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; available: all, {', '.join(SUITES)}")
    overrides = {"general": {"seed": args.seed}}
    if args.cache:
        overrides["general"]["cache_dir"] = args.cache
    cfg = load_config(args.config, overrides)
    reports = run_suites(names, cfg, jobs=args.jobs)
    for rep in reports:
        failed = sum(not c.passed for c in rep.cases)
        status = "PASS" if rep.passed else "FAIL"
        extra = f" error: {rep.error}" if rep.error else ""
        print(f"{status} {rep.suite:20s} {len(rep.cases):4d} cases {failed:3d} failed "
              f"{rep.wall_time:7.1f}s{extra}", file=sys.stderr)
    if args.out:
        for p in emit_report(reports, args.out):
            print(f"wrote {p}", file=sys.stderr)
    else:
        sys.stdout.write(json.dumps(report_payload(reports), indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--weight", default="linear:a=1", help="catalog weight, e.g. monomial:p=2")
    common.add_argument("--n", type=int, default=1, help="complex dimension")
    common.add_argument("--dmax", type=int, default=None, help="moment table length (default: as needed)")
    common.add_argument("--method", default="hybrid", choices=("quadrature", "laplace", "hybrid"))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (directory for verify)")
    common.add_argument("--format", default="json", choices=("json", "csv"))
    common.add_argument("--cache", default=None, help="moment table cache directory")

    parser = argparse.ArgumentParser(prog="fockspace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def group(name, help_):
        p = sub.add_parser(name, help=help_)
        return p.add_subparsers(dest="action", required=True)

    g = group("weight", "weight catalog")
    p = g.add_parser("validate", parents=[common], help="derivative signs and smoothness exponents")
    p.set_defaults(func=cmd_weight_validate)

    g = group("moments", "moment tables")
    p = g.add_parser("build", parents=[common], help="build (and save with --out) a moment table")
    p.set_defaults(func=cmd_moments_build)

    g = group("kernel", "kernel series")
    p = g.add_parser("eval", parents=[common], help="scaled kernel value and log-derivatives")
    p.add_argument("--r", type=float, nargs="+", required=True, help="values of |<z,w>|")
    p.add_argument("--theta", type=float, default=0.0)
    p.set_defaults(func=cmd_kernel_eval)

    g = group("metric", "Bergman metric")
    p = g.add_parser("eval", parents=[common], help="beta^2, alpha^2 and their ratio")
    p.add_argument("--z", required=True, help="point, comma separated coordinates")
    p.add_argument("--xi", required=True, help="direction, comma separated coordinates")
    p.set_defaults(func=cmd_metric_eval)

    p = sub.add_parser("distance", parents=[common], help="distance estimate between two points")
    p.add_argument("--z", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--via", dest="method_distance", default="segment", choices=("segment", "grid", "ellipsoid"))
    p.set_defaults(func=cmd_distance)

    g = group("lattice", "Psi-lattices")
    p = g.add_parser("build", parents=[common], help="build a lattice; --out writes index,re,im CSV")
    p.add_argument("--R", type=float, default=10.0, help="domain radius")
    p.add_argument("--r", type=float, default=1.0, help="covering radius")
    p.add_argument("--backend", default="grid", choices=("grid", "ellipsoid"))
    p.add_argument("--layout", default="rings", choices=("rings", "greedy"))
    p.set_defaults(func=cmd_lattice_build)

    g = group("hankel", "Hankel operators")
    p = g.add_parser("spectrum", parents=[common], help="eigenvalues of H*H for the symbol conj(z^m)")
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(func=cmd_hankel_spectrum)

    g = group("mo", "mean oscillation")
    p = g.add_parser("profile", parents=[common], help="MO^2 of z^m on a radial grid")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--rho-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=41)
    p.set_defaults(func=cmd_mo_profile)

    p = sub.add_parser("carleson", parents=[common], help="Carleson condition (ii) on a grid")
    p.add_argument("--measure", default="lebesgue", choices=("lebesgue", "growing", "lattice"))
    p.add_argument("--rho-max", type=float, default=9.0)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--R", type=float, default=10.0, help="lattice domain radius")
    p.add_argument("--r", type=float, default=1.0, help="lattice covering radius")
    p.set_defaults(func=cmd_carleson)

    p = sub.add_parser("toeplitz", parents=[common], help="Toeplitz diagonal of Lebesgue measure on a disc")
    p.add_argument("--radius", type=float, default=None, help="restrict to |z| <= radius")
    p.set_defaults(func=cmd_toeplitz)

    p = sub.add_parser("besov", parents=[common], help="Besov tail verdict and integral for z^m")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=float, nargs="+", default=[3.0, 5.0])
    p.set_defaults(func=cmd_besov)

    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("suite", help="suite name or 'all'")
    p.add_argument("--config", default=None, help="INI configuration file")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, Output(args))
    except (UsageError, ValueError, KeyError, LookupError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
