"""Logarithmic growth functions and their derived quantities.

A weight is a function ``Psi: [0, inf) -> [0, inf)`` with ``Psi' > 0``,
``Psi'' >= 0`` and ``Psi''' >= 0``.  Everything downstream is driven by

    Phi(x) = x * Psi'(x),

whose inverse locates the peak of the moment integrand ``x**t * exp(-Psi(x))``.

The catalog entries carry closed-form derivatives (and their logarithms, so
that rapidly growing weights can be probed far out without overflow).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "Weight",
    "SmoothnessReport",
    "InadmissibleWeight",
    "CATALOG",
    "make_weight",
    "parse_weight",
    "phi_inverse",
    "check_hypotheses",
]

ArrayLike = Union[float, np.ndarray]

CATALOG = ("linear", "monomial", "affine", "exp")


class InadmissibleWeight(ValueError):
    """Parameters violate Psi' > 0, Psi'' >= 0, Psi''' >= 0."""


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True)
class Weight:
    """A catalog weight with analytic derivatives up to order three.

    ``psi_delta(x, dx)`` returns ``Psi(x + dx) - Psi(x)`` without the
    cancellation of the naive difference; ``log_derivs(x)`` returns the
    logarithms of ``Psi', Psi'', Psi'''`` (``-inf`` where a derivative is 0).
    """

    name: str
    params: dict
    psi: Callable
    psi1: Callable
    psi2: Callable
    psi3: Callable
    psi_delta: Callable = field(repr=False)
    log_derivs: Callable = field(repr=False)
    description: str = ""

    # Phi and its derivatives are always derived from Psi.
    # past the double range these are inf, which callers test for
    def phi(self, x):
        with np.errstate(over="ignore"):
            return x * self.psi1(x)

    def phi1(self, x):
        with np.errstate(over="ignore"):
            return self.psi1(x) + x * self.psi2(x)

    def phi2(self, x):
        with np.errstate(over="ignore"):
            return 2.0 * self.psi2(x) + x * self.psi3(x)

    def log_phi1(self, x):
        l1, l2, _ = self.log_derivs(x)
        return np.logaddexp(l1, _log(x) + l2)

    def log_phi2(self, x):
        _, l2, l3 = self.log_derivs(x)
        return np.logaddexp(math.log(2.0) + l2, _log(x) + l3)

    @property
    def label(self) -> str:
        """Canonical ``name:key=value`` string, the inverse of parse_weight."""
        if not self.params:
            return self.name
        body = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.name}:{body}"

    def __hash__(self):
        return hash(self.label)

    def __eq__(self, other):
        return isinstance(other, Weight) and self.label == other.label


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _linear(a: float) -> Weight:
    if not a > 0:
        raise InadmissibleWeight(f"linear weight needs a > 0, got a={a}")
    la = math.log(a)
    return Weight(
        name="linear",
        params={"a": float(a)},
        psi=lambda x: a * np.asarray(x, dtype=float),
        psi1=lambda x: np.full_like(np.asarray(x, dtype=float), a),
        psi2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        psi3=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        psi_delta=lambda x, dx: a * np.asarray(dx, dtype=float),
        log_derivs=lambda x: (
            np.full_like(np.asarray(x, dtype=float), la),
            np.full_like(np.asarray(x, dtype=float), -np.inf),
            np.full_like(np.asarray(x, dtype=float), -np.inf),
        ),
        description=f"Psi(x) = {a:g} x (classical Fock weight)",
    )


def _monomial_parts(p: float):
    """Closures for x**p; p == 1 or p >= 2 is assumed checked by the caller."""
    c1, c2, c3 = p, p * (p - 1.0), p * (p - 1.0) * (p - 2.0)

    def power(c, e):
        def f(x):
            x = np.asarray(x, dtype=float)
            if c == 0.0:
                return np.zeros_like(x)
            if e == 0.0:
                return np.full_like(x, c)
            with np.errstate(divide="ignore"):
                return c * x**e

        return f

    def log_power(c, e):
        def f(x):
            x = np.asarray(x, dtype=float)
            if c == 0.0:
                return np.full_like(x, -np.inf)
            if e == 0.0:
                return np.full_like(x, math.log(c))
            return math.log(c) + e * _log(x)

        return f

    def delta(x, dx):
        x = np.asarray(x, dtype=float)
        dx = np.asarray(dx, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x**p * np.expm1(p * np.log1p(dx / x))
        return np.where(x > 0, out, (x + dx) ** p - x**p)

    return (
        power(1.0, p),
        power(c1, p - 1.0),
        power(c2, p - 2.0),
        power(c3, p - 3.0),
        delta,
        (log_power(c1, p - 1.0), log_power(c2, p - 2.0), log_power(c3, p - 3.0)),
    )


def _check_exponent(p: float) -> None:
    if p == 1.0 or p >= 2.0:
        return
    if 1.0 < p < 2.0:
        raise InadmissibleWeight(
            f"monomial exponent p={p} lies in (1, 2): Psi''' = p(p-1)(p-2) x^(p-3) < 0"
        )
    raise InadmissibleWeight(f"monomial exponent p={p} < 1: Psi'' < 0")


def _monomial(p: float) -> Weight:
    _check_exponent(p)
    psi, d1, d2, d3, delta, logs = _monomial_parts(p)
    return Weight(
        name="monomial",
        params={"p": float(p)},
        psi=psi,
        psi1=d1,
        psi2=d2,
        psi3=d3,
        psi_delta=delta,
        log_derivs=lambda x: tuple(f(x) for f in logs),
        description=f"Psi(x) = x^{p:g}",
    )


def _affine(a: float, p: float) -> Weight:
    if not a > 0:
        raise InadmissibleWeight(f"affine weight needs a > 0, got a={a}")
    _check_exponent(p)
    psi, d1, d2, d3, delta, logs = _monomial_parts(p)
    la = math.log(a)

    def log_derivs(x):
        l1, l2, l3 = (f(x) for f in logs)
        return np.logaddexp(la, l1), l2, l3

    return Weight(
        name="affine",
        params={"a": float(a), "p": float(p)},
        psi=lambda x: a * np.asarray(x, dtype=float) + psi(x),
        psi1=lambda x: a + d1(x),
        psi2=d2,
        psi3=d3,
        psi_delta=lambda x, dx: a * np.asarray(dx, dtype=float) + delta(x, dx),
        log_derivs=log_derivs,
        description=f"Psi(x) = {a:g} x + x^{p:g}",
    )


def _exponential() -> Weight:
    def ex(x):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(x, dtype=float))

    def psi(x):
        with np.errstate(over="ignore"):
            return np.expm1(np.asarray(x, dtype=float))

    def logs(x):
        x = np.asarray(x, dtype=float)
        return x, x, x

    return Weight(
        name="exp",
        params={},
        psi=psi,
        psi1=ex,
        psi2=ex,
        psi3=ex,
        psi_delta=lambda x, dx: np.exp(np.asarray(x, dtype=float)) * np.expm1(dx),
        log_derivs=logs,
        description="Psi(x) = e^x - 1",
    )


def make_weight(name: str, **params: float) -> Weight:
    """Build a catalog weight.

    >>> make_weight("monomial", p=2).psi2(3.0)
    array(2.)
    """
    if name not in CATALOG:
        raise ValueError(f"unknown weight {name!r}; catalog: {', '.join(CATALOG)}")
    allowed = {"linear": {"a"}, "monomial": {"p"}, "affine": {"a", "p"}, "exp": set()}[name]
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unexpected parameters for {name!r}: {sorted(extra)}")
    params = {k: float(v) for k, v in params.items()}
    if name in ("monomial", "affine") and "p" not in params:
        raise ValueError(f"weight {name!r} is missing parameter 'p'")
    if name == "linear":
        return _linear(params.get("a", 1.0))
    if name == "monomial":
        return _monomial(params["p"])
    if name == "affine":
        return _affine(params.get("a", 1.0), params["p"])
    return _exponential()


def parse_weight(text: str) -> Weight:
    """Parse ``"linear:a=1"``, ``"monomial:p=2"``, ``"affine:a=1,p=3"`` or ``"exp"``."""
    name, _, body = text.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed weight parameter {item!r} in {text!r}")
        params[key.strip()] = float(value)
    return make_weight(name.strip(), **params)


def phi_inverse(w: Weight, t: ArrayLike, tol: float = 1e-12, max_iter: int = 200):
    """Solve ``Phi(x) = t`` for ``t >= Phi(0)``; vectorized over ``t``.

    Bracketing bisection with Newton steps accepted only when they stay
    inside the bracket.  Converged when ``|Phi(x) - t| <= tol * max(1, |t|)``.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    phi0 = float(w.phi(0.0))
    if np.any(t_arr < phi0) or not np.all(np.isfinite(t_arr)):
        raise ValueError(f"phi_inverse needs finite t >= Phi(0) = {phi0}")

    lo = np.zeros_like(t_arr)
    hi = np.ones_like(t_arr)
    for _ in range(2000):
        short = w.phi(hi) < t_arr
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
        lo = np.where(short, hi / 2.0, lo)
    else:  # pragma: no cover - Phi grows at least linearly
        raise RuntimeError("could not bracket Phi^{-1}(t)")

    x = 0.5 * (lo + hi)
    scale = tol * np.maximum(1.0, np.abs(t_arr))
    done = t_arr == phi0
    x = np.where(done, 0.0, x)
    for _ in range(max_iter):
        f = w.phi(x) - t_arr
        done |= np.abs(f) <= scale
        if done.all():
            break
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        d1 = w.phi1(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / d1
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        step = np.where(inside, newton, 0.5 * (lo + hi))
        # a stalled bracket (ulp-wide) has converged as far as doubles allow
        stalled = (hi - lo) <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300)
        done |= stalled
        x = np.where(done, x, step)
    else:
        raise RuntimeError(f"phi_inverse did not converge within {max_iter} iterations")
    # one polishing Newton step; the residual test alone leaves ~1e-13 in x
    with np.errstate(divide="ignore", invalid="ignore"):
        polished = x - (w.phi(x) - t_arr) / w.phi1(x)
    x = np.where(np.isfinite(polished) & (polished >= lo) & (polished <= hi), polished, x)
    return float(x[0]) if scalar else x


@dataclass(frozen=True)
class SmoothnessReport:
    """Grid verdicts for the two smoothness conditions.

    ``eta_basic`` concerns ``Phi''(t) = O(t^-1/2 Phi'(t)^(1+eta))`` and
    ``eta_basic2`` the same statement for ``Psi``; either is the string
    ``"all"`` when the left side vanishes on the grid.
    """

    weight: str
    eta_basic: Union[float, str]
    eta_basic2: Union[float, str]
    verdict_basic: str
    verdict_basic2: str
    grid_used: dict
    slopes: dict

    @property
    def alpha(self) -> float:
        """Window exponent midway between eta and 1/2 (1/4 when eta is free)."""
        if self.eta_basic == "all":
            return 0.25
        # the fit lands on eta = -1/2 up to rounding for quadratic growth
        return max(0.0, 0.5 * (float(self.eta_basic) + 0.5))


def _eta_fit(t, log_lhs, log_base):
    """Slope of log(lhs * t^(1/2) / base) against log(base) over the grid tail."""
    if np.all(np.isneginf(log_lhs)):
        return "all", None
    g = log_lhs + 0.5 * np.log(t) - log_base
    tail = slice(len(t) // 2, None)
    x, y = log_base[tail], g[tail]
    if np.ptp(x) < 1e-9:
        # base is flat: the condition holds for every eta iff t^(1/2) lhs stays bounded
        trend = np.polyfit(np.log(t[tail]), y, 1)[0]
        return ("all", trend) if trend <= 1e-9 else (math.inf, trend)
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, slope


def check_hypotheses(w: Weight, grid=None) -> SmoothnessReport:
    """Estimate the minimal eta in the two smoothness conditions by slope fits.

    ``grid`` is an array of sample points ``t``; the default is 200 points
    spaced logarithmically over ``[1, 1e6]``.
    """
    t = np.logspace(0, 6, 200) if grid is None else np.asarray(grid, dtype=float)
    if t.size < 8 or np.log10(t.max() / t.min()) < 2.0:
        raise ValueError("smoothness grid must have >= 8 points spanning two decades")

    l1, l2, _ = w.log_derivs(t)
    eta1, s1 = _eta_fit(t, w.log_phi2(t), w.log_phi1(t))
    eta2, s2 = _eta_fit(t, l2, l1)

    def verdict(eta):
        return "satisfied" if eta == "all" or eta < 0.5 else "violated"

    return SmoothnessReport(
        weight=w.label,
        eta_basic=eta1,
        eta_basic2=eta2,
        verdict_basic=verdict(eta1),
        verdict_basic2=verdict(eta2),
        grid_used={"tmin": float(t.min()), "tmax": float(t.max()), "points": int(t.size)},
        slopes={"basic": s1, "basic2": s2},
    )
