"""Moments ``s_d = int_0^inf x^d exp(-Psi(x)) dx`` in log space.

Two independent routes are provided:

* adaptive quadrature of the integrand centred on its peak ``Phi^{-1}(d)``;
* the Laplace approximation
  ``log s_d ~ d log x* - Psi(x*) + log sqrt(2 pi) + 1/2 log(x* / Phi'(x*))``.

Both factor out the same peak value, so the difference between the routes is
computed from O(1) quantities even when ``log s_d`` itself is enormous.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .weights import Weight, check_hypotheses, parse_weight, phi_inverse

__all__ = [
    "MomentTable",
    "LaplaceDiagnostics",
    "RouteDisagreement",
    "log_moment_quadrature",
    "laplace_log_moment",
    "log_integral",
    "i_ratio",
    "build_moment_table",
    "save_table",
    "load_table",
]

TABLE_FORMAT = "fockspace-moment-table"
TABLE_VERSION = 1

_TAIL_MOMENT = math.log(1e18)
_TAIL_IRATIO = math.log(1e12)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class RouteDisagreement(RuntimeError):
    """Quadrature and Laplace moments differ by more than the allowed threshold."""


def _peak_location(w, t, lo, hi, log_density):
    if log_density is None:
        x0 = phi_inverse(w, t) if t > 0 else 0.0
        return min(max(x0, lo), hi)

    def neg(x):
        with np.errstate(divide="ignore"):
            return -(t * math.log(x) if t else 0.0) + float(w.psi(x)) - float(log_density(x))

    if math.isfinite(hi):
        top = hi
    else:
        top = max(phi_inverse(w, t + 1.0), lo + 1.0)
        while neg(2.0 * top) < neg(top):
            top *= 2.0
        top *= 2.0
    xs = np.linspace(max(lo, 1e-300), top, 257)
    vals = np.array([neg(x) for x in xs])
    i = int(np.argmin(vals))
    if 0 < i < len(xs) - 1:
        res = minimize_scalar(neg, bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, xs[i])})
        return float(res.x)
    return float(xs[i]) if i else lo


def log_integral(
    w: Weight,
    t: float,
    *,
    lo: float = 0.0,
    hi: float = math.inf,
    log_density: Optional[Callable] = None,
    tail: float = _TAIL_MOMENT,
    width: Optional[float] = None,
):
    """Integrate ``x^t exp(-Psi(x)) g(x)`` over ``[lo, hi]`` around its peak.

    Returns ``(x_peak, log_peak, log_I, rel_err)`` with
    ``integral = exp(log_peak + log_I)``; ``I`` is the integral of the
    peak-normalized integrand ``exp(-h(x))``.  The window ``[x* - W, x* + W]``
    starts at ``width`` (or a Laplace-scale guess) and doubles until
    ``h >= tail`` at both ends; whatever lies between ``lo`` and the left end
    is integrated separately.
    """
    t = float(t)
    xs = _peak_location(w, t, lo, hi, log_density)
    lg0 = float(log_density(xs)) if log_density is not None else 0.0
    if xs > 0:
        log_peak = t * math.log(xs) - float(w.psi(xs)) + lg0
    else:
        log_peak = -float(w.psi(0.0)) + lg0 if t == 0 else -math.inf
    if not math.isfinite(log_peak):
        raise ValueError(f"moment integrand has no finite peak for t={t}")

    def h(x):
        dx = x - xs
        if xs > 0:
            if x <= 0:
                return math.inf if t > 0 else float(w.psi_delta(xs, dx)) - (
                    float(log_density(x)) - lg0 if log_density is not None else 0.0)
            # far left of the peak x - xs can round to -xs; the ratio form is exact there
            lr = math.log1p(dx / xs) if x > 0.5 * xs else math.log(x / xs)
            val = -t * lr + float(w.psi_delta(xs, dx))
        else:
            val = (-t * math.log(x) if t and x > 0 else (math.inf if t else 0.0)) + float(
                w.psi_delta(0.0, x))
        if log_density is not None:
            val -= float(log_density(x)) - lg0
        return val

    def f(x):
        v = h(x)
        return math.exp(-v) if v < 745.0 else 0.0

    p1 = float(w.phi1(xs)) if xs > 0 else 0.0
    sigma = math.sqrt(xs / p1) if xs > 0 and p1 > 0 else None
    w0 = width or (6.0 * sigma if sigma else 1e-6 * max(1.0, xs))

    def reach(direction):
        W = w0
        for _ in range(400):
            x = xs + direction * W
            if direction < 0 and x <= lo:
                return xs - lo
            if direction > 0 and x >= hi:
                return hi - xs
            if h(x) >= tail:
                return W
            W *= 2.0
        raise RuntimeError(f"could not bound the moment integrand tail at t={t}")

    left, right = reach(-1.0), reach(1.0)
    a, b = xs - left, xs + right
    scale = sigma or min(left, right) or max(left, right)
    points = [xs] + [xs + s * k * scale for k in (1.0, 3.0, 8.0, 20.0) for s in (-1.0, 1.0)]
    points = sorted(p for p in set(points) if a < p < b)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, points=points or None, epsabs=0.0,
                                  epsrel=1e-13, limit=500)
        if a > lo:
            v2, e2 = integrate.quad(f, lo, a, epsabs=0.0, epsrel=1e-10, limit=200)
            val, err = val + v2, err + e2
    if not val > 0 or not math.isfinite(val):
        raise RuntimeError(f"quadrature failed for t={t} (value {val})")
    return xs, log_peak, math.log(val), err / val


def log_moment_quadrature(w: Weight, d: int, n: int = 1) -> float:
    """``log s_{d+n-1}``: the moment behind the d-th kernel coefficient in dimension n.

    For ``n = 1`` this is plainly ``log s_d``.
    """
    if d < 0:
        raise ValueError("moment index must be nonnegative")
    _, peak, log_i, _ = log_integral(w, d + n - 1)
    return peak + log_i


def _laplace_parts(w, d):
    """Vectorized ``(log_peak, log_I_asymptotic)`` for ``d > Phi(0)``."""
    d = np.asarray(d, dtype=float)
    xs = phi_inverse(w, d)
    with np.errstate(divide="ignore"):
        peak = d * np.log(xs) - w.psi(xs)
        log_i = _LOG_SQRT_2PI + 0.5 * (np.log(xs) - np.log(w.phi1(xs)))
    return peak, log_i


def laplace_log_moment(w: Weight, d):
    """Laplace approximation of ``log s_d``; accepts scalars or arrays."""
    d_arr = np.asarray(d, dtype=float)
    phi0 = float(w.phi(0.0))
    if np.any(d_arr < phi0):
        raise ValueError(f"Laplace route needs d >= Phi(0) = {phi0}")
    peak, log_i = _laplace_parts(w, d_arr)
    out = peak + log_i
    if not np.all(np.isfinite(out)):
        raise ValueError("Laplace route is degenerate where Phi^{-1}(d) = 0 (d = Phi(0))")
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LaplaceDiagnostics:
    t: float
    i_value: float
    i_asymptotic: float
    ratio: float


def i_ratio(w: Weight, t: float, alpha: Optional[float] = None) -> LaplaceDiagnostics:
    """Compare ``I(t)`` by quadrature with ``sqrt(2 pi) [x*/Phi'(x*)]^(1/2)``.

    The quadrature window starts at ``tau(x*) = sqrt(x*) Phi'(x*)^-alpha`` and
    is widened until the neglected tail is below 1e-12.
    """
    if t < float(w.phi(0.0)) + 1.0:
        raise ValueError("i_ratio needs t >= Phi(0) + 1")
    if alpha is None:
        alpha = check_hypotheses(w).alpha
    xs = phi_inverse(w, t)
    tau = math.sqrt(xs) * float(w.phi1(xs)) ** (-alpha)
    _, _, log_i, _ = log_integral(w, t, tail=_TAIL_IRATIO, width=tau)
    i_val = math.exp(log_i)
    i_asym = math.sqrt(2.0 * math.pi * xs / float(w.phi1(xs)))
    return LaplaceDiagnostics(t=float(t), i_value=i_val, i_asymptotic=i_asym, ratio=i_val / i_asym)


@dataclass(frozen=True, eq=False)
class MomentTable:
    """``log s_d`` for ``d = 0..d_max`` together with per-entry error estimates."""

    weight: Weight
    n: int
    d_max: int
    log_s: np.ndarray = field(repr=False)
    method: str
    err_est: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.log_s.setflags(write=False)
        self.err_est.setflags(write=False)

    @property
    def n_terms(self) -> int:
        """Number of kernel coefficients the table supports in dimension ``n``."""
        return self.d_max - self.n + 2

    @cached_property
    def log_coeffs(self) -> np.ndarray:
        """``log c_d`` for the Lebesgue-normalized kernel series, ``d < n_terms``.

        ``c_d = (d+1)...(d+n-1) / (pi^n s_{d+n-1})``.
        """
        if self.n_terms < 1:
            raise ValueError(f"table with d_max={self.d_max} is too short for n={self.n}")
        d = np.arange(self.n_terms, dtype=float)
        n = self.n
        out = gammaln(d + n) - gammaln(d + 1) - self.log_s[n - 1 :] - n * math.log(math.pi)
        out.setflags(write=False)
        return out

    def log_convexity_defect(self) -> np.ndarray:
        """``2 log s_d - log s_{d-1} - log s_{d+1}`` for interior d (<= 0 when log-convex)."""
        ls = self.log_s
        return 2.0 * ls[1:-1] - ls[:-2] - ls[2:]


def _quadrature_entries(w, ds):
    vals, errs = [], []
    for d in ds:
        _, peak, log_i, rel = log_integral(w, int(d))
        vals.append(peak + log_i)
        errs.append(rel)
    return np.array(vals), np.array(errs)


def _stride_nodes(lo: int, hi: int, ratio: float = 1.02, min_step: int = 4) -> np.ndarray:
    nodes = [lo]
    while nodes[-1] < hi:
        nodes.append(min(hi, max(nodes[-1] + min_step, int(round(nodes[-1] * ratio)))))
    return np.array(nodes, dtype=int)


def build_moment_table(
    w: Weight,
    n: int = 1,
    d_max: int = 0,
    method: str = "quadrature",
    crossover: int = 200,
    threshold: float = 1e-3,
) -> MomentTable:
    """Tabulate ``log s_d`` for ``d = 0..d_max``.

    ``method`` is ``"quadrature"``, ``"laplace"`` (``d = 0`` still uses
    quadrature because the Laplace point sits on the boundary) or
    ``"hybrid"``: quadrature up to ``crossover``; beyond it the Laplace values
    are corrected by a spline of ``quadrature - laplace`` sampled on a
    geometric stride.  Any stride node where the two routes disagree by more
    than ``threshold`` (relative, in log) raises :class:`RouteDisagreement`.
    """
    if d_max < 0 or n < 1:
        raise ValueError("need d_max >= 0 and n >= 1")
    ds = np.arange(d_max + 1)
    if method == "quadrature":
        log_s, err = _quadrature_entries(w, ds)
    elif method == "laplace":
        log_s = np.empty(d_max + 1)
        err = np.full(d_max + 1, np.nan)
        log_s[:1], err[:1] = _quadrature_entries(w, ds[:1])
        if d_max >= 1:
            log_s[1:] = laplace_log_moment(w, ds[1:])
    elif method == "hybrid":
        cut = min(crossover, d_max)
        head, head_err = _quadrature_entries(w, ds[: cut + 1])
        if d_max <= crossover:
            log_s, err = head, head_err
        else:
            nodes = _stride_nodes(cut, d_max)
            peak_n, lap_n = _laplace_parts(w, nodes)
            quad_i = np.empty(len(nodes))
            quad_err = np.empty(len(nodes))
            for k, d in enumerate(nodes):
                _, peak, log_i, rel = log_integral(w, int(d))
                # re-express against the vectorized Laplace peak so both routes share it
                quad_i[k] = log_i + (peak - peak_n[k])
                quad_err[k] = rel
            corr = quad_i - lap_n
            rel_gap = np.abs(corr) / np.maximum(np.abs(peak_n + quad_i), 1e-300)
            bad = rel_gap > threshold
            if bad.any():
                k = int(np.argmax(bad))
                raise RouteDisagreement(
                    f"quadrature and Laplace disagree at d={nodes[k]}: "
                    f"relative gap {rel_gap[k]:.3e} > {threshold:g}"
                )
            spline = CubicSpline(np.log(nodes), corr)
            tail_d = ds[cut + 1 :]
            peak_t, lap_t = _laplace_parts(w, tail_d)
            u = np.log(tail_d)
            log_s = np.concatenate([head, peak_t + lap_t + spline(u)])
            interp_err = np.abs(spline(u) - np.interp(u, np.log(nodes), corr))
            err = np.concatenate([head_err, interp_err + np.interp(u, np.log(nodes), quad_err)])
    else:
        raise ValueError(f"unknown method {method!r}")
    return MomentTable(weight=w, n=int(n), d_max=int(d_max), log_s=np.asarray(log_s, float),
                       method=method, err_est=np.asarray(err, float))


def save_table(table: MomentTable, path) -> Path:
    """Write a table as versioned plain text (17 significant digits per value).

    Layout::

        # fockspace-moment-table v1
        # weight: monomial:p=2
        # n: 1
        # dmax: 3
        # method: quadrature
        # columns: d logS errEst
        0 -0.12078223763524522 1.1102230246251565e-16
        ...
    """
    path = Path(path)
    lines = [
        f"# {TABLE_FORMAT} v{TABLE_VERSION}",
        f"# weight: {table.weight.label}",
        f"# n: {table.n}",
        f"# dmax: {table.d_max}",
        f"# method: {table.method}",
        "# columns: d logS errEst",
    ]
    lines += [f"{d} {v:.17g} {e:.17g}" for d, (v, e) in enumerate(zip(table.log_s, table.err_est))]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_table(path) -> MomentTable:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
            elif line[1:].strip().startswith(TABLE_FORMAT):
                version = line.split()[-1]
                if version != f"v{TABLE_VERSION}":
                    raise ValueError(f"unsupported table version {version}")
        elif line.strip():
            rows.append(line.split())
    if not rows:
        raise ValueError(f"{path}: no table records")
    d = np.array([int(r[0]) for r in rows])
    if not np.array_equal(d, np.arange(len(rows))):
        raise ValueError(f"{path}: records must list d = 0, 1, 2, ... in order")
    return MomentTable(
        weight=parse_weight(header["weight"]),
        n=int(header["n"]),
        d_max=int(header["dmax"]),
        log_s=np.array([float(r[1]) for r in rows]),
        method=header["method"],
        err_est=np.array([float(r[2]) for r in rows]),
    )
