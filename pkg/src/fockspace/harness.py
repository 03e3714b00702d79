"""Verification suites, configuration and report files.

A suite is a function ``ctx -> list[Case]``.  Every case records its inputs,
the measured and expected values, the tolerance and how they are compared:

``value``    pass iff ``|measured - expected| <= tolerance``
``at_most``  pass iff ``measured <= expected + tolerance``
``at_least`` pass iff ``measured >= expected - tolerance``
``verdict``  pass iff the two labels are equal

Configuration is an INI file; each suite reads its own section and falls
back on ``DEFAULTS`` (the acceptance values).  Example::

    [general]
    seed = 7
    cache_dir = /tmp/fockspace-cache

    [qx]
    x_values = 10, 20, 40
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import inspect
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import gammainc, gammaln

from . import __version__, weights as _weights_module
from .geometry import (
    MetricField,
    ball_volume,
    build_lattice,
    lattice_checks,
    metric,
    triangle_check,
)
from .kernel import eval_kernel_scaled, offdiag_envelope_check, qx_profile, required_dmax
from .moments import (
    MomentTable,
    build_moment_table,
    i_ratio,
    laplace_log_moment,
    load_table,
    log_moment_quadrature,
    save_table,
)
from .operators import (
    NormalizedBasis,
    PointMasses,
    RadialMeasure,
    basis_norm_oracle,
    besov_diagnostic,
    bloch_seminorm,
    carleson_test,
    dense_hankel_oracle,
    hankel_spectrum,
    mo_profile,
    toeplitz_diag,
    trace_identity_check,
)
from .weights import Weight, parse_weight
from ._numerics import loglog_slope, trend

__all__ = [
    "DEFAULTS",
    "SUITES",
    "Case",
    "SuiteReport",
    "SuiteContext",
    "TableCache",
    "catalog_hash",
    "load_config",
    "run_suite",
    "run_suites",
    "emit_report",
]

TOOL = "fockspace"

DEFAULTS = {
    "general": {"seed": "0", "cache_dir": "", "auto_build": "yes"},
    "kernel-classical": {"r_max": "500", "points": "100", "tol": "1e-9"},
    "laplace": {
        "dmax": "2000",
        "tol_moment": "1e-8",
        "laplace_d": "200, 500, 1000",
        "tol_laplace": "1e-3",
        "weights": "linear:a=1; monomial:p=2; exp",
        "t_values": "100, 300, 1000",
        "tol_ratio": "0.02",
    },
    "theorem-b": {
        "weights": "monomial:p=2; monomial:p=3; exp",
        "r_values": "100, 200, 400",
        "tol": "0.05",
    },
    "offdiag": {"weights": "linear:a=1; monomial:p=2", "r_values": "10, 30, 100", "thetas": "65"},
    "qx": {"x_values": "10, 20", "tol": "0.05"},
    "lattice": {
        "R": "10",
        "r": "1",
        "max_multiplicity": "10",
        "triples": "1000",
        "triangle_weight": "monomial:p=2",
        "triangle_radius": "2",
        "ball_tol": "0.05",
    },
    "hankel-exact": {"dmax": "1000", "tol": "1e-6", "dense_dmax": "12", "dense_m": "1, 2, 3"},
    "schatten-threshold": {
        "dmax": "10000",
        "slope_range": "100, 10000",
        "slope": "-0.5",
        "slope_tol": "0.02",
        "p_values": "3, 4, 4.5, 5, 6",
    },
    "mo-bloch": {"rho_max": "10", "points": "41", "ineq_tol": "1e-9"},
    "carleson": {
        "points": "50",
        "rho_max": "9",
        "tol": "1e-6",
        "lattice_R": "10",
        "lattice_r": "1",
        "lattice_R_quadratic": "2.5",
        "lattice_r_quadratic": "0.5",
        "spread": "10",
        "growth_rho_max": "4",
    },
    "trace": {"ranks": "0, 1, 2, 3", "tol": "1e-6"},
    "besov": {"p_values": "3, 5", "tol": "1e-6"},
}

ANCHORS = {
    "kernel-classical": "reproducing kernel series",
    "laplace": "Laplace estimate of I(t)",
    "theorem-b": "Theorem B",
    "offdiag": "off-diagonal kernel estimate",
    "qx": "Q_x lemma",
    "lattice": "Psi-lattice covering lemma",
    "hankel-exact": "Theorem A",
    "schatten-threshold": "Theorem F",
    "mo-bloch": "Theorem A; Theorem C",
    "carleson": "Theorem D; Theorem E",
    "trace": "trace lemma",
    "besov": "Theorem F",
}


def catalog_hash() -> str:
    """Digest of the weight catalog source; cached tables are keyed by it."""
    src = inspect.getsource(_weights_module).encode()
    return hashlib.sha256(src).hexdigest()[:16]


# ---------------------------------------------------------------- config


def load_config(path=None, overrides: Optional[dict] = None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = str
    cfg.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg.read(path)
    for section, values in (overrides or {}).items():
        if not cfg.has_section(section):
            cfg.add_section(section)
        for k, v in values.items():
            cfg.set(section, k, str(v))
    return cfg


def _floats(text: str) -> list:
    return [float(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def _ints(text: str) -> list:
    return [int(x) for x in _floats(text)]


def _weights(text: str) -> list:
    return [parse_weight(s) for s in text.split(";") if s.strip()]


# ---------------------------------------------------------------- tables


class TableCache:
    """Moment tables on disk, keyed by weight, n, d_max, method and catalog hash.

    Without a directory the cache lives in memory only.
    """

    def __init__(self, directory=None, auto_build: bool = True):
        self.directory = Path(directory) if directory else None
        self.auto_build = auto_build
        self._mem = {}
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, w: Weight, n: int, d_max: int, method: str) -> Path:
        label = re.sub(r"[^A-Za-z0-9=.]+", "_", w.label)
        return self.directory / f"{label}_n{n}_d{d_max}_{method}_{catalog_hash()}.txt"

    def get(self, w: Weight, n: int, d_max: int, method: str = "hybrid") -> MomentTable:
        key = (w.label, n, d_max, method)
        if key in self._mem:
            return self._mem[key]
        table = None
        if self.directory:
            path = self._path(w, n, d_max, method)
            if path.is_file():
                table = load_table(path)
        if table is None:
            if not self.auto_build:
                raise LookupError(f"no cached moment table for {key} and auto_build is off")
            table = build_moment_table(w, n, d_max, method=method)
            if self.directory:
                save_table(table, self._path(w, n, d_max, method))
        self._mem[key] = table
        return table

    def for_radius(self, w: Weight, r_max: float, n: int = 1, method: str = "hybrid",
                   extra: int = 0) -> MomentTable:
        """A table long enough to evaluate the kernel at ``|z|^2 <= r_max``."""
        return self.get(w, n, required_dmax(w, r_max, n) + extra, method)


# ---------------------------------------------------------------- reports


@dataclass
class Case:
    inputs: dict
    measured: object
    expected: object
    tolerance: float = 0.0
    kind: str = "value"
    passed: bool = field(init=False)

    def __post_init__(self):
        m, e, t = self.measured, self.expected, self.tolerance
        if self.kind == "verdict":
            self.passed = m == e
        elif self.kind == "value":
            self.passed = bool(abs(m - e) <= t)
        elif self.kind == "at_most":
            self.passed = bool(m <= e + t)
        elif self.kind == "at_least":
            self.passed = bool(m >= e - t)
        else:
            raise ValueError(f"unknown case kind {self.kind!r}")

    def as_dict(self) -> dict:
        return {
            "inputs": {k: _jsonable(v) for k, v in self.inputs.items()},
            "kind": self.kind,
            "measured": _jsonable(self.measured),
            "expected": _jsonable(self.expected),
            "tolerance": _jsonable(self.tolerance),
            "pass": self.passed,
        }


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class SuiteReport:
    suite: str
    anchor: str
    seed: int
    cases: list
    wall_time: float = 0.0
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.cases) and all(c.passed for c in self.cases)

    def as_dict(self, wall_time: bool = True) -> dict:
        out = {
            "suite": self.suite,
            "anchor": self.anchor,
            "seed": self.seed,
            "pass": self.passed,
            "failed": sum(not c.passed for c in self.cases),
            "cases": [c.as_dict() for c in self.cases],
        }
        if self.error is not None:
            out["error"] = self.error
        if wall_time:
            out["wallTime"] = round(self.wall_time, 3)
        return out


@dataclass
class SuiteContext:
    config: configparser.ConfigParser
    section: str
    seed: int
    cache: TableCache

    def get(self, key: str) -> str:
        return self.config.get(self.section, key)

    def float(self, key: str) -> float:
        return float(self.get(key))

    def int(self, key: str) -> int:
        return int(float(self.get(key)))

    def floats(self, key: str) -> list:
        return _floats(self.get(key))

    def weights(self, key: str = "weights") -> list:
        return _weights(self.get(key))


# ---------------------------------------------------------------- suites

LINEAR = "linear:a=1"
QUADRATIC = "monomial:p=2"


def _suite_kernel_classical(ctx: SuiteContext) -> list:
    w = parse_weight(LINEAR)
    r_max = ctx.float("r_max")
    table = ctx.cache.for_radius(w, r_max)
    cases = []
    for r in np.linspace(0.0, r_max, ctx.int("points")):
        v = eval_kernel_scaled(table, float(r))
        cases.append(Case({"weight": w.label, "r": float(r)}, math.pi * v.modulus, 1.0, ctx.float("tol")))
    return cases


def _closed_form_log_moments(w: Weight, d: np.ndarray) -> Optional[np.ndarray]:
    if w.name == "linear":
        a = w.params["a"]
        return gammaln(d + 1.0) - (d + 1.0) * math.log(a)
    if w.name == "monomial":
        p = w.params["p"]
        return gammaln((d + 1.0) / p) - math.log(p)
    return None


def _monotone_approach(ratios) -> bool:
    """Ratios move monotonically in t and end closer to 1 than they started.

    The distance to 1 itself need not shrink at every step: for ``e^x - 1``
    the ratio crosses 1 near t = 320 and overshoots by under 1e-4.
    """
    steps = np.diff(ratios)
    one_way = bool(np.all(steps > 0) or np.all(steps < 0))
    return one_way and abs(ratios[-1] - 1.0) < abs(ratios[0] - 1.0)


def _suite_laplace(ctx: SuiteContext) -> list:
    cases = []
    d_max = ctx.int("dmax")
    d = np.arange(d_max + 1)
    for w in (parse_weight(LINEAR), parse_weight(QUADRATIC)):
        table = ctx.cache.get(w, 1, d_max, "quadrature")
        err = float(np.abs(table.log_s - _closed_form_log_moments(w, d)).max())
        cases.append(Case({"weight": w.label, "check": "quadrature vs closed form", "dmax": d_max},
                          err, 0.0, ctx.float("tol_moment")))
    t_values = ctx.floats("t_values")
    for w in ctx.weights():
        for dd in _ints(ctx.get("laplace_d")):
            q = log_moment_quadrature(w, dd)
            lap = float(laplace_log_moment(w, dd))
            cases.append(Case({"weight": w.label, "check": "laplace vs quadrature", "d": dd},
                              abs(lap - q) / abs(q), 0.0, ctx.float("tol_laplace")))
        ratios = [float(i_ratio(w, t).ratio) for t in t_values]
        cases.append(Case({"weight": w.label, "check": "I ratio", "t": t_values[-1]},
                          ratios[-1], 1.0, ctx.float("tol_ratio")))
        mono = "monotone" if _monotone_approach(ratios) else "not monotone"
        cases.append(Case({"weight": w.label, "check": "I ratio trend", "t": t_values, "ratios": ratios},
                          mono, "monotone", kind="verdict"))
    return cases


def _suite_theorem_b(ctx: SuiteContext) -> list:
    cases = []
    tol = ctx.float("tol")
    for w in ctx.weights():
        for n, dirs in ((1, {"any": [1.0]}),
                        (2, {"radial": [1.0, 0.0], "tangential": [0.0, 1.0],
                             "mixed": [2 ** -0.5, 2 ** -0.5]})):
            # a short table; large |z|^2 goes through the continuum form
            table = ctx.cache.get(w, n, 64 + n, "quadrature")
            for r in ctx.floats("r_values"):
                z = [math.sqrt(r)] + [0.0] * (n - 1)
                for name, xi in dirs.items():
                    s = metric(table, z, xi)
                    cases.append(Case({"weight": w.label, "n": n, "r": r, "direction": name},
                                      s.ratio, 1.0, tol))
    return cases


def _suite_offdiag(ctx: SuiteContext) -> list:
    cases = []
    thetas = np.linspace(-math.pi, math.pi, ctx.int("thetas"))
    thetas = np.unique(np.concatenate([thetas, [0.0, 0.5]]))
    r_values = ctx.floats("r_values")
    for w in ctx.weights():
        table = ctx.cache.for_radius(w, max(r_values))
        rep = offdiag_envelope_check(table, r_values, thetas)
        for name, val in (("c_near", rep.c_near), ("c_far", rep.c_far), ("c_lower", rep.c_lower)):
            ok = "finite positive" if 0 < val < math.inf else "degenerate"
            cases.append(Case({"weight": w.label, "constant": name, "value": val}, ok,
                              "finite positive", kind="verdict"))
        if w.name == "linear":
            for r, th, lhs, rhs, ratio in rep.rows:
                if th == 0.0:
                    cases.append(Case({"weight": w.label, "r": r, "theta": 0.0, "check": "near ratio"},
                                      ratio, 1.0, 1e-9))
            # e^{-r}|k(r e^{i theta})| = e^{r(cos theta - 1)}/pi
            # the complex sum cancels by e^12 here; compare within its roundoff bound
            v = eval_kernel_scaled(table, 100.0, 0.5)
            exact = math.exp(100.0 * (math.cos(0.5) - 1.0)) / math.pi
            cases.append(Case({"weight": w.label, "r": 100.0, "theta": 0.5, "check": "closed form",
                               "exact": exact}, abs(v.modulus - exact), 0.0,
                              v.roundoff_bound + v.truncation_bound))
    return cases


def _suite_qx(ctx: SuiteContext) -> list:
    cases = []
    lin = parse_weight(LINEAR)
    rep = qx_profile(lin, 3.0, [5.0])
    cases.append(Case({"weight": lin.label, "x": 3.0, "r": 5.0, "check": "Q value"}, rep.rows[0][1], 2.0, 1e-12))
    w = parse_weight(QUADRATIC)
    for x in ctx.floats("x_values"):
        rep = qx_profile(w, x)
        cases.append(Case({"weight": w.label, "x": x, "check": "window curvature ratio"},
                          rep.ratio, 1.0, ctx.float("tol")))
        for side, m in (("small", rep.min_margin_small), ("large", rep.min_margin_large)):
            cases.append(Case({"weight": w.label, "x": x, "check": f"{side} margin"}, m, 0.0,
                              kind="at_least"))
    return cases


def _suite_lattice(ctx: SuiteContext) -> list:
    cases = []
    w = parse_weight(LINEAR)
    R, r = ctx.float("R"), ctx.float("r")
    table = ctx.cache.for_radius(w, 1.2 * R * R + 1)
    lat = build_lattice(table, R, r)
    chk = lattice_checks(lat)
    base = {"weight": w.label, "R": R, "r": r, "points": chk["points"]}
    cases.append(Case({**base, "check": "separation"}, chk["min_separation"], r, kind="at_least"))
    cases.append(Case({**base, "check": "covering"}, chk["max_cover"] < r, True, kind="verdict"))
    cases.append(Case({**base, "check": "multiplicity"}, chk["multiplicity"], ctx.float("max_multiplicity"),
                      kind="at_most"))
    vol = ball_volume(table, 0.0, 1.0, sampler="grid")
    cases.append(Case({"weight": w.label, "z": 0.0, "r": 1.0, "check": "ball volume"},
                      vol.measured, math.pi, ctx.float("ball_tol") * math.pi))

    tw = parse_weight(ctx.get("triangle_weight"))
    rad = ctx.float("triangle_radius")
    reach = 3.0 * rad
    fld = MetricField(ctx.cache.for_radius(tw, reach * reach), reach)
    rng = np.random.default_rng(ctx.seed)
    k = ctx.int("triples")
    u = rng.uniform(size=(k, 3))
    ang = rng.uniform(0, 2 * math.pi, size=(k, 3))
    triples = rad * np.sqrt(u) * np.exp(1j * ang)
    tri = triangle_check(fld, triples)
    cases.append(Case({"weight": tw.label, "triples": k, "radius": rad, "check": "triangle inequality",
                       "raw_violations": tri["raw_violations"]}, tri["violations"], 0, kind="at_most"))
    return cases


def _suite_hankel_exact(ctx: SuiteContext) -> list:
    cases = []
    d_max, tol = ctx.int("dmax"), ctx.float("tol")
    lin, quad = parse_weight(LINEAR), parse_weight(QUADRATIC)
    tl = ctx.cache.get(lin, 1, d_max + 4, "quadrature")
    tq = ctx.cache.get(quad, 1, d_max + 4, "quadrature")
    lam = hankel_spectrum(NormalizedBasis(tl), 1, d_max).lam
    cases.append(Case({"weight": lin.label, "m": 1, "d": f"0..{d_max}"}, float(np.abs(lam - 1).max()), 0.0, tol))
    lam = hankel_spectrum(NormalizedBasis(tq), 2, d_max).lam
    cases.append(Case({"weight": quad.label, "m": 2, "d": 0}, lam[0], 0.5, tol))
    cases.append(Case({"weight": quad.label, "m": 2, "d": 1}, lam[1], 1.0, tol))
    cases.append(Case({"weight": quad.label, "m": 2, "d": f"2..{d_max}"}, float(np.abs(lam[2:] - 1).max()),
                      0.0, tol))
    dd = ctx.int("dense_dmax")
    for w, t in ((lin, tl), (quad, tq)):
        gaps = basis_norm_oracle(t, 20)
        cases.append(Case({"weight": w.label, "check": "basis norms", "d": "0..20"}, float(gaps.max()), 0.0, 1e-8))
        for m in _ints(ctx.get("dense_m")):
            o = dense_hankel_oracle(t, m, dd)
            base = {"weight": w.label, "m": m, "dmax": dd}
            cases.append(Case({**base, "check": "gram off-diagonal"}, o["max_offdiag"], 0.0, tol))
            cases.append(Case({**base, "check": "gram diagonal vs lambda"}, o["max_diag_error"], 0.0, tol))
    return cases


def _suite_schatten(ctx: SuiteContext) -> list:
    cases = []
    w = parse_weight(QUADRATIC)
    d_max = ctx.int("dmax")
    table = ctx.cache.get(w, 1, d_max + 2, "hybrid")
    ps = ctx.floats("p_values")
    hs = hankel_spectrum(NormalizedBasis(table), 1, d_max, p_values=ps)
    lo, hi = ctx.floats("slope_range")
    d = np.unique(np.geomspace(lo, hi, 200).astype(int))
    slope = loglog_slope(d, hs.lam[d])
    cases.append(Case({"weight": w.label, "m": 1, "range": [lo, hi], "check": "lambda slope"},
                      slope, ctx.float("slope"), ctx.float("slope_tol")))
    btable = ctx.cache.for_radius(w, 100.0)
    for p in ps:
        expected = "convergent" if p > 4 else "divergent"
        v = hs.schatten[float(p)]
        cases.append(Case({"weight": w.label, "m": 1, "p": p, "check": "partial sums",
                           "tail_exponent": v.tail_exponent, "partial_sum": v.partial_sum},
                          v.verdict, expected, kind="verdict"))
        b = besov_diagnostic(btable, 1, p)
        cases.append(Case({"weight": w.label, "m": 1, "p": p, "check": "besov tail agrees",
                           "tail_exponent": b.tail_exponent}, b.tail_verdict, v.verdict, kind="verdict"))
    return cases


def _suite_mo_bloch(ctx: SuiteContext) -> list:
    cases = []
    rho_max = ctx.float("rho_max")
    grid = np.linspace(0.0, rho_max, ctx.int("points"))
    for d0, label in ((1, LINEAR), (2, QUADRATIC)):
        w = parse_weight(label)
        table = ctx.cache.for_radius(w, rho_max**2)
        basis = NormalizedBasis(table)
        for m in (1, 2, 3):
            hs = hankel_spectrum(basis, m, min(table.d_max - m, 10000))
            mo = mo_profile(basis, m, grid)
            coeffs = [0.0] * m + [1.0]
            bl = bloch_seminorm(table, coeffs, grid)
            base = {"weight": w.label, "degree": d0, "m": m}
            want_b = "bounded" if m <= d0 else "unbounded"
            for name, got in (("hankel", hs.boundedness), ("bmo", mo.bmo_verdict), ("bloch", bl.bloch_verdict)):
                cases.append(Case({**base, "check": f"{name} boundedness"}, got, want_b, kind="verdict"))
            want_c = "decaying" if m < d0 else "not decaying"
            lam_trend = trend(hs.tail_slope)
            for name, got in (("lambda", lam_trend), ("vmo", mo.vmo_verdict), ("little bloch", bl.little_bloch)):
                got = "decaying" if got == "decaying" else "not decaying"
                cases.append(Case({**base, "check": f"{name} compactness"}, got, want_c, kind="verdict"))
            if m <= 2:
                excess = float(np.max(bl.profile - 2 * math.sqrt(2) * mo.mo))
                cases.append(Case({**base, "check": "bloch <= 2 sqrt 2 MO"}, excess, 0.0, ctx.float("ineq_tol"),
                                  kind="at_most"))
    return cases


def _suite_carleson(ctx: SuiteContext) -> list:
    cases = []
    tol = ctx.float("tol")
    rho_max = ctx.float("rho_max")
    grid = np.linspace(0.0, rho_max, ctx.int("points"))
    for label in (LINEAR, QUADRATIC):
        w = parse_weight(label)
        table = ctx.cache.for_radius(w, rho_max**2)
        rep = carleson_test(NormalizedBasis(table), RadialMeasure.lebesgue(), grid)
        cases.append(Case({"weight": w.label, "measure": "lebesgue", "check": "condition (ii)"},
                          float(np.abs(rep.condition_ii - 1).max()), 0.0, tol))
        # Toeplitz of Lebesgue measure is the identity
        td = toeplitz_diag(NormalizedBasis(table), RadialMeasure.lebesgue(), 60)
        cases.append(Case({"weight": w.label, "measure": "lebesgue", "check": "toeplitz identity"},
                          float(np.abs(td.entries - 1).max()), 0.0, tol))

    lin = parse_weight(LINEAR)
    tl = ctx.cache.for_radius(lin, 150.0)
    td = toeplitz_diag(NormalizedBasis(tl), RadialMeasure.lebesgue(1.0), 60)
    exact = gammainc(np.arange(61) + 1.0, 1.0)
    cases.append(Case({"weight": lin.label, "measure": "lebesgue|z|<=1", "check": "toeplitz entries"},
                      float(np.abs(td.entries - exact).max()), 0.0, tol))
    cases.append(Case({"weight": lin.label, "measure": "lebesgue|z|<=1", "check": "trace class"},
                      td.schatten[1.0].verdict, "convergent", kind="verdict"))

    quad = parse_weight(QUADRATIC)
    g_rho = ctx.float("growth_rho_max")
    tq = ctx.cache.for_radius(quad, g_rho**2)
    grow = RadialMeasure("density exp(Psi/2)", lambda x: 0.5 * quad.psi(x))
    rep = carleson_test(NormalizedBasis(tq), grow, np.linspace(0.0, g_rho, 20))
    cases.append(Case({"weight": quad.label, "measure": grow.name, "slope": rep.tail_slope},
                      rep.verdict, "not-carleson", kind="verdict"))

    for label, suffix in ((LINEAR, ""), (QUADRATIC, "_quadratic")):
        w = parse_weight(label)
        R, r = ctx.float("lattice_R" + suffix), ctx.float("lattice_r" + suffix)
        tlat = ctx.cache.for_radius(w, 1.2 * R * R + 1)
        lat = build_lattice(tlat, R, r)
        pm = PointMasses.lattice_measure(tlat, lat.points)
        zg = np.linspace(0.0, 0.7 * R, 15) * np.exp(0.3j)
        rep = carleson_test(NormalizedBasis(tlat), pm, zg, lattice=lat)
        base = {"weight": w.label, "measure": pm.name, "R": R, "r": r}
        cases.append(Case({**base, "check": "condition (ii) bounded", "sup": rep.condition_ii_sup},
                          rep.verdict, "carleson", kind="verdict"))
        cases.append(Case({**base, "check": "ball ratio spread", "balls": int(rep.lattice_ratios.size)},
                          rep.ratio_spread, ctx.float("spread"), kind="at_most"))
    return cases


def _suite_trace(ctx: SuiteContext) -> list:
    cases = []
    for label in (LINEAR, QUADRATIC):
        w = parse_weight(label)
        basis = NormalizedBasis(ctx.cache.for_radius(w, 400.0 if w.name == "linear" else 60.0))
        for k in _ints(ctx.get("ranks")):
            rep = trace_identity_check(basis, k)
            cases.append(Case({"weight": w.label, "rank": k}, rep["integral"], float(k), ctx.float("tol")))
    return cases


def _suite_besov(ctx: SuiteContext) -> list:
    cases = []
    quad, lin = parse_weight(QUADRATIC), parse_weight(LINEAR)
    tq = ctx.cache.for_radius(quad, 100.0)
    tl = ctx.cache.for_radius(lin, 100.0)
    for p in ctx.floats("p_values"):
        b = besov_diagnostic(tq, 1, p)
        base = {"weight": quad.label, "m": 1, "p": p}
        cases.append(Case({**base, "check": "tail exponent"}, b.tail_exponent, 3.0 - p, ctx.float("tol")))
        expected = "convergent" if p > 4 else "divergent"
        cases.append(Case({**base, "check": "verdict", "full_integral": b.full_integral}, b.tail_verdict,
                          expected, kind="verdict"))
        finite = "finite" if math.isfinite(b.full_integral) else "infinite"
        cases.append(Case({**base, "check": "full integral"}, finite,
                           "finite" if expected == "convergent" else "infinite", kind="verdict"))
        b = besov_diagnostic(tl, 1, p)
        cases.append(Case({"weight": lin.label, "m": 1, "p": p, "check": "verdict"}, b.tail_verdict,
                          "divergent", kind="verdict"))
    return cases


SUITES: dict = {
    "kernel-classical": _suite_kernel_classical,
    "laplace": _suite_laplace,
    "theorem-b": _suite_theorem_b,
    "offdiag": _suite_offdiag,
    "qx": _suite_qx,
    "lattice": _suite_lattice,
    "hankel-exact": _suite_hankel_exact,
    "schatten-threshold": _suite_schatten,
    "mo-bloch": _suite_mo_bloch,
    "carleson": _suite_carleson,
    "trace": _suite_trace,
    "besov": _suite_besov,
}


def _cache_from(cfg) -> TableCache:
    directory = cfg.get("general", "cache_dir") or os.environ.get("FOCKSPACE_CACHE") or None
    return TableCache(directory, cfg.getboolean("general", "auto_build"))


def run_suite(name: str, config=None, cache: Optional[TableCache] = None) -> SuiteReport:
    """Run one suite; exceptions inside the suite become a failed report."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: {', '.join(SUITES)}")
    cfg = config if config is not None else load_config()
    seed = cfg.getint("general", "seed")
    ctx = SuiteContext(cfg, name, seed, cache or _cache_from(cfg))
    t0 = time.perf_counter()
    try:
        cases = SUITES[name](ctx)
        err = None
    except Exception as exc:  # reported, not raised: one broken suite must not hide the others
        cases, err = [], f"{type(exc).__name__}: {exc}"
    return SuiteReport(name, ANCHORS[name], seed, cases, time.perf_counter() - t0, err)


def _run_isolated(args):
    name, cfg_dict = args
    cfg = load_config()
    cfg.read_dict(cfg_dict)
    return run_suite(name, cfg)


def run_suites(names, config=None, jobs: int = 1) -> list:
    """Run several suites, optionally in worker processes; order follows ``names``."""
    cfg = config if config is not None else load_config()
    if jobs <= 1 or len(names) <= 1:
        cache = _cache_from(cfg)
        return [run_suite(n, cfg, cache) for n in names]
    cfg_dict = {s: dict(cfg.items(s)) for s in cfg.sections()}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_isolated, [(n, cfg_dict) for n in names]))


def report_payload(reports, wall_time: bool = True) -> dict:
    if not reports:
        raise ValueError("no reports to emit")
    return {
        "tool": TOOL,
        "version": __version__,
        "catalogHash": catalog_hash(),
        "pass": all(r.passed for r in reports),
        "suites": [r.as_dict(wall_time) for r in reports],
    }


def emit_report(reports, out_dir) -> list:
    """Write ``summary.json`` and one ``<suite>.csv`` per report; returns the paths."""
    payload = report_payload(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "summary.json"]
    paths[0].write_text(json.dumps(payload, indent=2) + "\n")
    for rep in reports:
        p = out / f"{rep.suite}.csv"
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["suite", "case", "kind", "inputs", "measured", "expected", "tolerance", "pass"])
            for i, c in enumerate(rep.cases):
                d = c.as_dict()
                wr.writerow([rep.suite, i, d["kind"], json.dumps(d["inputs"], sort_keys=False),
                             d["measured"], d["expected"], d["tolerance"], d["pass"]])
        paths.append(p)
    return paths
