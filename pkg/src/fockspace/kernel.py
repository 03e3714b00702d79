"""Reproducing kernel ``K(z, w) = k(<z, w>)`` and its logarithmic derivatives.

The kernel is normalized against Lebesgue measure on C^n,

    k(zeta) = sum_d c_d zeta^d,   c_d = (d+1)...(d+n-1) / (pi^n s_{d+n-1}),

so the classical weight ``Psi(x) = x`` in one variable gives ``k = e^zeta / pi``.
Series are summed in log space with a single max-term shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from ._numerics import gauss_legendre
from .moments import MomentTable, laplace_log_moment
from .weights import Weight, check_hypotheses

__all__ = [
    "TableTooShort",
    "ScaledKernelValue",
    "KernelDerivatives",
    "KernelEnvelope",
    "EnvelopeReport",
    "QxReport",
    "truncation_start",
    "required_dmax",
    "table_reach",
    "kernel_table",
    "eval_kernel_scaled",
    "log_kernel_diagonal",
    "log_derivatives",
    "kernel_envelope",
    "offdiag_envelope_check",
    "qx_profile",
]

_STOP = math.log(1e18)
_EPS = np.finfo(float).eps


class TableTooShort(ValueError):
    """The moment table does not reach the truncation index for the requested r."""

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = int(required)


def truncation_start(w: Weight, r: float) -> float:
    """``Phi(r) + 12 sqrt(max(r Phi'(r), 1))``: terms past this point are tail."""
    return float(w.phi(r)) + 12.0 * math.sqrt(max(r * float(w.phi1(r)), 1.0))


def required_dmax(w: Weight, r: float, n: int = 1) -> int:
    """Smallest table ``d_max`` (estimated from the Laplace route) that covers ``r``."""
    d0 = truncation_start(w, r)
    if r <= 0:
        return n - 1
    if d0 > 5e7:
        # the Gaussian tail past d0 is already far below 1e-18 of the peak
        return int(math.ceil(d0)) + n + 8
    lr = math.log(r)
    # locate the peak term from the Laplace moments, then search right for 1e-18 below it
    peak_d = max(1.0, float(w.phi(r)))
    floor = peak_d * lr - laplace_log_moment(w, peak_d) - _STOP - 2.0

    def above(d):
        return d * lr - laplace_log_moment(w, d + n - 1) + (n - 1) * math.log(d + n - 1) >= floor

    lo = max(1, math.ceil(d0))
    if not above(lo):
        return lo + n + 8
    step = max(8, int(math.sqrt(d0)))
    hi = lo + step
    while above(hi):
        lo, step = hi, 2 * step
        hi = lo + step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (mid, hi) if above(mid) else (lo, mid)
    return hi + n + 8


def table_reach(table: MomentTable) -> float:
    """Largest ``r`` (to 0.1%) whose series the table can sum."""
    w, n = table.weight, table.n
    if required_dmax(w, 1e-3, n) > table.d_max:
        return 0.0
    lo, hi = 1e-3, 1.0
    while required_dmax(w, hi, n) <= table.d_max:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if required_dmax(w, mid, n) <= table.d_max else (lo, mid)
    return lo


def kernel_table(w: Weight, r_max: float, n: int = 1, method: str = "hybrid", extra: int = 0):
    """Build a moment table that reaches ``r_max`` (plus ``extra`` indices)."""
    from .moments import build_moment_table

    return build_moment_table(w, n, required_dmax(w, r_max, n) + extra, method=method)


def _term_logs(table: MomentTable, r: float, d0: float):
    """Log-terms ``log c_d + d log r`` truncated per the stopping rule."""
    lc = table.log_coeffs
    lr = math.log(r)
    cap = int(min(lc.size, 2 * d0 + 64))
    while True:
        terms = lc[:cap] + np.arange(cap) * lr
        run_max = np.maximum.accumulate(terms)
        past = np.arange(cap) > d0
        hit = np.nonzero(past & (terms < run_max - _STOP))[0]
        if hit.size:
            return terms[: hit[0] + 1]
        if cap == lc.size:
            # past ~1e15 the index no longer fits a table; report it unsized
            need = required_dmax(table.weight, r, table.n) if d0 < 1e15 else -1
            hint = f"need d_max >= {need}" if need >= 0 else "no finite table reaches it"
            raise TableTooShort(f"moment table (d_max={table.d_max}) too short for r={r:g}; {hint}", need)
        cap = min(lc.size, 2 * cap)


@dataclass(frozen=True)
class ScaledKernelValue:
    """``e^{-sigma} k(r e^{i theta})`` as ``(log_modulus, phase)``.

    ``roundoff_bound`` is an absolute bound (same scaling as the value) on the
    floating-point error of the complex sum; it matters only when heavy
    cancellation occurs at large ``|theta|``.
    """

    log_modulus: float
    phase: float
    sigma: float
    terms_used: int
    truncation_bound: float = 0.0
    roundoff_bound: float = 0.0

    @property
    def modulus(self) -> float:
        return math.exp(self.log_modulus)

    def value(self) -> complex:
        """Unscaled complex value (may overflow for large sigma)."""
        return complex(np.exp(self.log_modulus + self.sigma) * np.exp(1j * self.phase))


def _reduce_angle(theta: float) -> float:
    t = math.remainder(theta, 2.0 * math.pi)
    return math.pi if t == -math.pi else t


def eval_kernel_scaled(table: MomentTable, r: float, theta: float = 0.0) -> ScaledKernelValue:
    """Evaluate ``e^{-Psi(r)} k(r e^{i theta})``; ``r`` is the modulus of ``<z, w>``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    w = table.weight
    sigma = float(w.psi(r))
    theta = _reduce_angle(float(theta))
    if r == 0:
        return ScaledKernelValue(float(table.log_coeffs[0]) - sigma, 0.0, sigma, 1)
    terms = _term_logs(table, r, truncation_start(w, r))
    top = terms.max()
    tail = float(np.exp(terms[-1] - top))
    if theta == 0.0:
        lm = float(logsumexp(terms))
        return ScaledKernelValue(lm - sigma, 0.0, sigma, terms.size, tail, _EPS * terms.size)
    mags = np.exp(terms - top)
    s = np.sum(mags * np.exp(1j * theta * np.arange(terms.size)))
    abs_sum = float(mags.sum())
    # error of the compensated-free complex sum: a few ulps per term of the modulus sum
    roundoff = 4.0 * _EPS * math.sqrt(terms.size) * abs_sum
    mod = abs(s)
    lm = (math.log(mod) if mod > 0 else -math.inf) + top - sigma
    return ScaledKernelValue(
        lm,
        float(np.angle(s)) if mod > 0 else 0.0,
        sigma,
        terms.size,
        tail * math.exp(top - sigma),
        roundoff * math.exp(top - sigma),
    )


def log_kernel_diagonal(table: MomentTable, r: float) -> float:
    """``log k(r)`` (unscaled)."""
    v = eval_kernel_scaled(table, r)
    return v.log_modulus + v.sigma


class KernelDerivatives(NamedTuple):
    kp_over_k: float
    curvature: float


def _series_derivatives(table: MomentTable, r: float) -> KernelDerivatives:
    if r == 0:
        lc = table.log_coeffs
        if lc.size < 3:
            raise TableTooShort("need at least three coefficients at r=0", table.n + 2)
        a1, a2 = math.exp(lc[1] - lc[0]), math.exp(lc[2] - lc[0])
        return KernelDerivatives(a1, 2.0 * a2 - a1 * a1)
    terms = _term_logs(table, r, truncation_start(table.weight, r))
    p = np.exp(terms - terms.max())
    p /= p.sum()
    d = np.arange(terms.size, dtype=float)
    mean = float(p @ d)
    var = float(p @ (d - mean) ** 2)
    return KernelDerivatives(mean / r, (var - mean) / (r * r))


_GL_INNER = gauss_legendre(24)
_GL_OUTER = gauss_legendre(64)


def _continuum_derivatives(w: Weight, n: int, r: float) -> KernelDerivatives:
    """Index-continuum evaluation of the same series.

    The terms ``c_d r^d`` are a smooth bump in ``d`` of width
    ``sigma_d = sqrt(r Phi'(r))``.  Summing over ``d`` by an integral costs
    only ``O(exp(-2 pi^2 sigma_d^2))``, but the coefficients come from the
    Laplace form of ``s_d``, which leaves a relative error of order
    ``sigma_d^-4`` (about 2e-8 at ``sigma_d^2 = 3200`` for ``Psi = x^2``).
    The integral is taken in the Laplace variable ``x = Phi^{-1}(tau)`` around
    ``x = r``, and every exponent is accumulated as an integral of small
    increments so nothing cancels.
    """
    p1r = float(w.phi1(r))
    sig_tau = math.sqrt(r) * math.sqrt(p1r)
    sig_x = math.sqrt(r / p1r)
    tau_c = float(w.phi(r))
    lo = max(-12.0 * sig_x, -0.5 * r)
    hi = 12.0 * sig_x

    gi, wi = _GL_INNER
    go, wo = _GL_OUTER

    def pieces(eta):
        # inner Gauss-Legendre on [0, eta] for dPhi and G = int -log(1 + s/r) Phi'(r + s) ds
        s = 0.5 * eta[:, None] * (gi[None, :] + 1.0)
        phi1 = w.phi1(r + s)
        dphi = 0.5 * eta * (phi1 @ wi)
        g = 0.5 * eta * ((-np.log1p(s / r) * phi1) @ wi)
        rel_p1 = w.phi1(r + eta) / p1r
        # Laplace correction -log I(tau) relative to the centre
        d_log_i = 0.5 * (np.log1p(eta / r) - np.log(rel_p1))
        expo = g - d_log_i + np.log(rel_p1)
        for j in range(n - 1):
            expo = expo + np.log1p(dphi / (tau_c - j))
        return expo, dphi / sig_tau

    # widen each side until the exponent is 45 below the centre (the bump can be skewed)
    floor = -0.999999 * r
    while lo > floor and pieces(np.array([lo]))[0][0] > -45.0:
        lo = max(floor, 1.5 * lo)
    while pieces(np.array([hi]))[0][0] > -45.0:
        hi *= 1.5
    # composite Gauss-Legendre, one panel per sig_x
    edges = np.linspace(lo, hi, min(4000, max(8, int(math.ceil((hi - lo) / sig_x)))) + 1)
    a, b = edges[:-1, None], edges[1:, None]
    eta = (0.5 * (b - a) * go[None, :] + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * wo[None, :]).ravel()
    expo, u = pieces(eta)
    q = wt * np.exp(expo - expo.max())
    z = q.sum()
    m1 = float(q @ u) / z
    var_u = float(q @ (u - m1) ** 2) / z
    # divide by r before multiplying: Var d ~ r Phi'(r) overflows before k'/k does
    kp = tau_c / r + (sig_tau / r) * m1 - (n - 1) / r
    return KernelDerivatives(kp, (p1r / r) * var_u - kp / r)


CONTINUUM_MIN_WIDTH = 10.0


def log_derivatives(table: MomentTable, r: float, mode: str = "series") -> KernelDerivatives:
    """``(k'(r)/k(r), k''/k - (k'/k)^2)``.

    Viewing ``p_d ∝ c_d r^d`` as a distribution on ``d``, these are ``E[d]/r``
    and ``(Var d - E[d])/r^2``.  ``mode`` is ``"series"`` (direct summation;
    raises :class:`TableTooShort` beyond the table), ``"continuum"`` or
    ``"auto"`` (series when the table reaches, otherwise continuum provided the
    bump is at least ``CONTINUUM_MIN_WIDTH`` indices wide).
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if not (math.isfinite(float(table.weight.phi(r))) and math.isfinite(float(table.weight.phi1(r)))):
        raise ValueError(f"Phi({r:g}) overflows double precision for {table.weight.label}")
    if mode == "series":
        return _series_derivatives(table, r)
    if mode == "continuum":
        return _continuum_derivatives(table.weight, table.n, r)
    if mode != "auto":
        raise ValueError(f"unknown mode {mode!r}")
    try:
        return _series_derivatives(table, r)
    except TableTooShort:
        if r > 0 and math.sqrt(r * float(table.weight.phi1(r))) >= CONTINUUM_MIN_WIDTH:
            return _continuum_derivatives(table.weight, table.n, r)
        raise


@dataclass(frozen=True)
class KernelEnvelope:
    r: float
    theta0: float
    near_bound: float
    far_bound_coeff: float

    def bound(self, theta: float) -> float:
        t = abs(theta)
        return self.near_bound if t <= self.theta0 else self.far_bound_coeff * t ** -3


def kernel_envelope(w: Weight, r: float, n: int = 1) -> KernelEnvelope:
    """Two-regime envelope for ``e^{-Psi(r)} |k(r e^{i theta})|`` in the module normalization."""
    p1 = float(w.phi1(r))
    q = float(w.psi1(r)) ** (n - 1) / math.pi**n
    return KernelEnvelope(
        r=float(r),
        theta0=(r * p1) ** -0.5,
        near_bound=p1 * q,
        far_bound_coeff=r**-1.5 * p1**-0.5 * q,
    )


@dataclass
class EnvelopeReport:
    weight: str
    c_near: float
    c_far: float
    c_lower: float
    rows: list

    columns = ("r", "theta", "lhs", "rhs", "ratio")


def offdiag_envelope_check(table: MomentTable, r_grid, theta_grid, c: float = 0.1) -> EnvelopeReport:
    """Measure the constants of the near/far kernel envelope on a grid.

    ``c_near`` and ``c_far`` are the largest ratios ``lhs / bound`` in each
    regime; ``c_lower`` is the smallest ``lhs / near_bound`` for
    ``|theta| < c theta0``.  Where the complex sum cancels below its roundoff
    bound the roundoff bound is used as ``lhs`` (so ``c_far`` stays an upper
    estimate).  Rows with ``nan`` ratio correspond to ``theta = 0`` on the
    far side, which cannot occur.
    """
    w = table.weight
    rows = []
    c_near = c_far = 0.0
    c_lower = math.inf
    for r in np.atleast_1d(r_grid):
        env = kernel_envelope(w, float(r), table.n)
        for th in np.atleast_1d(theta_grid):
            th = _reduce_angle(float(th))
            v = eval_kernel_scaled(table, float(r), th)
            lhs = max(v.modulus, v.roundoff_bound)
            rhs = env.bound(th)
            ratio = lhs / rhs
            rows.append((float(r), th, lhs, rhs, ratio))
            if abs(th) <= env.theta0:
                c_near = max(c_near, ratio)
            else:
                c_far = max(c_far, ratio)
            if abs(th) < c * env.theta0:
                c_lower = min(c_lower, v.modulus / env.near_bound)
    return EnvelopeReport(w.label, c_near, c_far, c_lower, rows)


@dataclass
class QxReport:
    x: float
    alpha: float
    window: float
    second_difference: float
    ratio: float
    min_margin_small: float
    min_margin_large: float
    rows: list

    columns = ("r", "Q", "margin", "region")


def qx_profile(w: Weight, x: float, r_grid=None, alpha: Optional[float] = None) -> QxReport:
    """Profile ``Q_x(r) = (Psi(r^2) + Psi(x^2))/2 - Psi(x r)`` around ``r = x``.

    The curvature inside the window ``|r - x| <= delta = Phi'(x^2)^-alpha`` is
    estimated by the centred second difference with step ``delta`` and
    compared with ``Phi'(x^2)``.  Outside the window the report gives the
    margins

        small:  Q - Psi'(0)/4 (x-r)^2 - 1/4 Phi'(x^2)^(1-2 alpha)     (r < x - delta)
        large:  Q - Psi'(0)/4 (x-r)^2 - 1/4 Phi'(r^2)^(1-2 alpha)     (r > x + delta)

    with the vanishing corrections dropped.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if alpha is None:
        alpha = check_hypotheses(w).alpha
    x = float(x)
    p1x = float(w.phi1(x * x))
    delta = p1x**-alpha

    def q(r):
        r = np.asarray(r, float)
        # Psi(r^2) - Psi(xr) and Psi(x^2) - Psi(xr) as increments keep Q free of cancellation
        return 0.5 * (w.psi_delta(x * r, r * r - x * r) + w.psi_delta(x * r, x * x - x * r))

    sd = float(q(x + delta) + q(x - delta) - 2.0 * q(x)) / delta**2
    if r_grid is None:
        r_grid = np.linspace(max(0.0, x - 6.0 * delta), x + 6.0 * delta, 241)
    r_grid = np.asarray(r_grid, float)
    qs = q(r_grid)
    c = float(w.psi1(0.0))
    rows = []
    small, large = [], []
    for r, qv in zip(r_grid, qs):
        if r < x - delta:
            m = qv - 0.25 * c * (x - r) ** 2 - 0.25 * p1x ** (1 - 2 * alpha)
            small.append(m)
            region = "small"
        elif r > x + delta:
            m = qv - 0.25 * c * (x - r) ** 2 - 0.25 * float(w.phi1(r * r)) ** (1 - 2 * alpha)
            large.append(m)
            region = "large"
        else:
            m, region = math.nan, "window"
        rows.append((float(r), float(qv), float(m), region))
    return QxReport(
        x=x,
        alpha=float(alpha),
        window=delta,
        second_difference=sd,
        ratio=sd / p1x,
        min_margin_small=min(small) if small else math.nan,
        min_margin_large=min(large) if large else math.nan,
        rows=rows,
    )
