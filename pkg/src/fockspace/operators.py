"""Operators on the one-variable space: Hankel spectra, Berezin-type transforms,
Toeplitz operators of radial measures, Carleson tests and Besov diagnostics.

Everything is diagonal in the monomial basis ``e_d = z^d / sqrt(pi s_d)``.
For the symbol ``conj(z^m)`` the projection maps ``conj(z)^m z^d`` to
``(s_d / s_{d-m}) z^{d-m}`` (zero when ``d < m``), so ``H^* H`` has eigenvalues

    lam_d = s_{d+m}/s_d - s_d/s_{d-m}        (the second term only for d >= m).

The Berezin transform of a diagonal operator with entries ``a_d`` is
``sum_d a_d t_d(z)`` where ``t_d = |e_d(z)|^2 / K(z, z)`` sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from ._numerics import gauss_legendre, loglog_slope, top_decade, trend
from .kernel import _term_logs, eval_kernel_scaled, log_derivatives, truncation_start
from .moments import MomentTable, log_integral

__all__ = [
    "NormalizedBasis",
    "HankelSpectrum",
    "SchattenVerdict",
    "MOProfile",
    "BlochProfile",
    "RadialMeasure",
    "PointMasses",
    "CarlesonReport",
    "ToeplitzDiagonal",
    "BesovDiagnostic",
    "hankel_lambda",
    "hankel_spectrum",
    "berezin_weights",
    "mo_profile",
    "bloch_seminorm",
    "measure_moments",
    "toeplitz_diag",
    "carleson_test",
    "trace_identity_check",
    "besov_diagnostic",
    "classify_schatten",
    "polar_quadrature",
    "basis_norm_oracle",
    "dense_hankel_oracle",
]

SCHATTEN_MARGIN = 0.05


@dataclass(frozen=True)
class NormalizedBasis:
    """Orthonormal monomials for a one-variable table: ``log ||z^d||^2 = log pi + log s_d``."""

    table: MomentTable

    def __post_init__(self):
        if self.table.n != 1:
            raise ValueError("operator spectra are implemented for n = 1")

    @property
    def log_norms(self) -> np.ndarray:
        return math.log(math.pi) + self.table.log_s

    @property
    def weight(self):
        return self.table.weight


def hankel_lambda(log_s: np.ndarray, m: int, d_max: Optional[int] = None) -> np.ndarray:
    """``lam_d`` for ``d = 0..d_max`` from a log-moment array (needs ``d_max + m`` entries)."""
    if m < 1:
        raise ValueError("symbol degree m must be >= 1")
    top = log_s.size - 1 - m if d_max is None else d_max
    if top + m > log_s.size - 1 or top < 0:
        raise ValueError(f"moment table too short: need d_max >= {top + m}")
    d = np.arange(top + 1)
    first = log_s[d + m] - log_s[d]
    lam = np.exp(first)
    k = d >= m
    # s_{d+m}/s_d - s_d/s_{d-m} = -(s_{d+m}/s_d) expm1(2 log s_d - log s_{d-m} - log s_{d+m})
    defect = 2.0 * log_s[d[k]] - log_s[d[k] - m] - log_s[d[k] + m]
    lam[k] = -lam[k] * np.expm1(defect)
    return lam


@dataclass(frozen=True)
class SchattenVerdict:
    p: float
    verdict: str
    partial_sum: float
    doubling_ratio: float
    tail_exponent: float


def classify_schatten(values: np.ndarray, p: float, d: Optional[np.ndarray] = None,
                      margin: float = SCHATTEN_MARGIN) -> SchattenVerdict:
    """Decide whether ``sum values^(p/2)`` converges from its tail.

    The tail exponent is ``(p/2)`` times the log-log slope of ``values`` over
    the last decade; the sum is called convergent when that exponent is below
    ``-1 - margin``.  The partial sum and the ratio ``S(D)/S(D/2)`` are
    reported alongside.
    """
    values = np.asarray(values, float)
    if d is None:
        d = np.arange(values.size)
    D = int(d[-1])
    idx = top_decade(D)
    idx = idx[np.isin(idx, d)]
    pos = values[np.searchsorted(d, idx)]
    if np.all(pos <= 0):
        slope = -math.inf
    else:
        slope = loglog_slope(idx, pos)
    expo = 0.5 * p * slope
    terms = np.abs(values) ** (0.5 * p)
    csum = np.cumsum(terms)
    half = csum[np.searchsorted(d, D // 2)]
    ratio = float(csum[-1] / half) if half > 0 else 1.0
    verdict = "convergent" if expo < -1.0 - margin else "divergent"
    return SchattenVerdict(float(p), verdict, float(csum[-1]), ratio, float(expo))


@dataclass
class HankelSpectrum:
    m: int
    lam: np.ndarray = field(repr=False)
    tail_slope: float
    boundedness: str
    compactness: str
    schatten: dict

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "tail_slope": self.tail_slope,
            "boundedness": self.boundedness,
            "compactness": self.compactness,
            "schatten": {str(k): vars(v) for k, v in self.schatten.items()},
            "lambda_head": self.lam[:8].tolist(),
        }


def hankel_spectrum(basis: NormalizedBasis, m: int, d_max: Optional[int] = None,
                    p_values: Sequence[float] = (1.0, 2.0, 3.0, 4.0, 4.5, 5.0, 6.0)) -> HankelSpectrum:
    """Eigenvalues of ``H^* H`` for the symbol ``conj(z^m)`` with trend verdicts.

    Bounded iff the last-decade log-log slope of ``lam_d`` is flat or
    decaying; compact iff decaying.
    """
    lam = hankel_lambda(basis.table.log_s, m, d_max)
    D = lam.size - 1
    idx = top_decade(D)
    slope = loglog_slope(idx, lam[idx])
    tr = trend(slope)
    sch = {float(p): classify_schatten(lam, p) for p in p_values}
    return HankelSpectrum(
        m=m,
        lam=lam,
        tail_slope=slope,
        boundedness="bounded" if tr != "growing" else "unbounded",
        compactness="compact" if tr == "decaying" else "non-compact",
        schatten=sch,
    )


def berezin_weights(table: MomentTable, r: float) -> np.ndarray:
    """``t_d = |e_d(z)|^2 / K(z, z)`` at ``|z|^2 = r`` (truncated like the kernel)."""
    if r == 0:
        return np.array([1.0])
    terms = _term_logs(table, r, truncation_start(table.weight, r))
    return np.exp(terms - logsumexp(terms))


def _berezin_of_diagonal(table: MomentTable, diag: np.ndarray, r: float) -> float:
    t = berezin_weights(table, r)
    if t.size > diag.size:
        raise ValueError(f"diagonal has {diag.size} entries, Berezin sum needs {t.size}")
    return float(t @ diag[: t.size])


@dataclass
class MOProfile:
    m: int
    radii: np.ndarray
    mo_squared: np.ndarray
    bmo_sup: float
    tail_slope: float
    vmo_verdict: str

    @property
    def bmo_verdict(self) -> str:
        return "bounded" if trend(self.tail_slope) != "growing" else "unbounded"

    @property
    def mo(self):
        return np.sqrt(np.maximum(self.mo_squared, 0.0))


def _tail_slope(radii, values):
    radii, values = np.asarray(radii), np.asarray(values)
    keep = radii >= 0.5 * radii.max()
    return loglog_slope(radii[keep], values[keep])


def mo_profile(basis: NormalizedBasis, m: int, w_grid) -> MOProfile:
    """``MO^2(w) = sum_d lam_d t_d(w)`` on ``|w|`` grid points.

    The verdict ``decaying`` (vanishing mean oscillation) comes from the
    log-log slope over the outer half of the grid.
    """
    radii = np.abs(np.asarray(w_grid, dtype=complex)).astype(float)
    lam = hankel_lambda(basis.table.log_s, m)
    mo2 = np.array([_berezin_of_diagonal(basis.table, lam, rho * rho) for rho in radii])
    slope = _tail_slope(radii, mo2)
    return MOProfile(m, radii, mo2, float(mo2.max()), slope, trend(slope))


@dataclass
class BlochProfile:
    radii: np.ndarray
    profile: np.ndarray
    sup: float
    tail_slope: float
    little_bloch: str

    @property
    def bloch_verdict(self) -> str:
        return "bounded" if trend(self.tail_slope) != "growing" else "unbounded"


def bloch_seminorm(table: MomentTable, coeffs: Sequence[complex], z_grid) -> BlochProfile:
    """``|f'(z)| / beta(z, 1)`` for the polynomial ``f = sum coeffs[j] z^j``.

    The little-Bloch verdict is the tail trend of the profile over the outer
    half of the grid; a constant ``f`` gives a zero profile (``decaying``).
    """
    z = np.asarray(z_grid, dtype=complex)
    deriv = np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=complex))
    fp = np.abs(np.polynomial.polynomial.polyval(z, deriv))
    beta = np.empty(z.size)
    for i, zz in enumerate(z):
        r = abs(zz) ** 2
        kp, cv = log_derivatives(table, r)
        beta[i] = math.sqrt(kp + r * cv)
    prof = fp / beta
    radii = np.abs(z)
    if not np.any(prof > 0):
        return BlochProfile(radii, prof, 0.0, -math.inf, "decaying")
    slope = _tail_slope(radii, prof)
    return BlochProfile(radii, prof, float(prof.max()), slope, trend(slope))


@dataclass(frozen=True)
class RadialMeasure:
    """``d nu = g(|z|^2) dV`` restricted to ``lo <= |z|^2 <= hi``.

    ``log_density`` maps ``x = |z|^2`` to ``log g(x)``; ``None`` means Lebesgue.
    ``from_samples`` builds it from tabulated ``(x, g)`` pairs.
    """

    name: str
    log_density: Optional[Callable] = None
    lo: float = 0.0
    hi: float = math.inf

    @classmethod
    def lebesgue(cls, radius: Optional[float] = None):
        if radius is None:
            return cls("lebesgue")
        return cls(f"lebesgue|z|<={radius:g}", None, 0.0, float(radius) ** 2)

    @classmethod
    def from_samples(cls, name, x, g):
        x, lg = np.asarray(x, float), np.log(np.asarray(g, float))
        return cls(name, lambda t: np.interp(t, x, lg), float(x[0]), float(x[-1]))


@dataclass(frozen=True)
class PointMasses:
    """``nu = sum_k weights_k delta_{points_k}`` (weights given in log form)."""

    name: str
    points: np.ndarray
    log_weights: np.ndarray

    @classmethod
    def lattice_measure(cls, table: MomentTable, points):
        """``e^{Psi(|a|^2)} / K(a, a)`` at each lattice point ``a``."""
        pts = np.asarray(points, dtype=complex)
        lw = np.array([-eval_kernel_scaled(table, abs(a) ** 2).log_modulus for a in pts])
        return cls("lattice-point-masses", pts, lw)


def measure_moments(table: MomentTable, measure: RadialMeasure, d_max: int) -> np.ndarray:
    """``log mu_d``, ``mu_d = int_lo^hi x^d g(x) exp(-Psi(x)) dx`` by quadrature."""
    w = table.weight
    out = np.empty(d_max + 1)
    for d in range(d_max + 1):
        _, peak, log_i, _ = log_integral(w, d, lo=measure.lo, hi=measure.hi,
                                         log_density=measure.log_density)
        out[d] = peak + log_i
    return out


@dataclass
class ToeplitzDiagonal:
    measure: str
    log_entries: np.ndarray = field(repr=False)
    schatten: dict

    @property
    def entries(self) -> np.ndarray:
        return np.exp(self.log_entries)


def toeplitz_diag(basis: NormalizedBasis, measure: RadialMeasure, d_max: Optional[int] = None,
                  p_values: Sequence[float] = (1.0, 2.0)) -> ToeplitzDiagonal:
    """``<T_nu e_d, e_d> = mu_d / s_d`` for a radial measure, with Schatten sums.

    ``classify_schatten`` is applied to the squared entries so that its
    ``p/2`` power becomes the plain ``p``-th power of the singular values.
    """
    if not isinstance(measure, RadialMeasure):
        raise TypeError("toeplitz_diag needs a radial measure")
    table = basis.table
    d_max = table.d_max if d_max is None else d_max
    log_e = measure_moments(table, measure, d_max) - table.log_s[: d_max + 1]
    sq = np.exp(2.0 * log_e)
    sch = {}
    for p in p_values:
        if np.all(sq[-10:] == 0):
            # entries underflow: the tail is smaller than any power
            csum = float(np.sum(np.exp(p * log_e)))
            sch[float(p)] = SchattenVerdict(float(p), "convergent", csum, 1.0, -math.inf)
        else:
            sch[float(p)] = classify_schatten(sq, p)
    return ToeplitzDiagonal(measure.name, log_e, sch)


@dataclass
class CarlesonReport:
    measure: str
    radii: np.ndarray
    log_condition_ii: np.ndarray
    tail_slope: float
    lattice_ratios: Optional[np.ndarray]
    ratio_spread: Optional[float]
    verdict: str

    @property
    def condition_ii(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_condition_ii)

    @property
    def condition_ii_sup(self) -> float:
        return float(self.condition_ii.max())


def _log_tail_slope(radii, logs):
    keep = (radii >= 0.5 * radii.max()) & (radii > 0) & np.isfinite(logs)
    if keep.sum() < 3:
        raise ValueError("need at least three nonzero grid radii for a tail fit")
    return float(np.polyfit(np.log(radii[keep]), logs[keep], 1)[0])


def carleson_test(basis: NormalizedBasis, measure, z_grid, lattice=None) -> CarlesonReport:
    """Condition (ii) of the Carleson characterization, plus lattice ball ratios.

    Condition (ii) is ``int |K(w,z)|^2 / K(z,z) e^{-Psi(|w|^2)} d nu(w)``: for
    a radial measure it is the Berezin transform of the Toeplitz diagonal,
    for point masses the sum of normalized kernel overlaps.  Given a grid
    lattice and point masses, ``nu(B(a_k, r)) / |B(a_k, r)|`` is reported for
    the balls inside the disc; each ball holds only its own centre because
    the points are r-separated.  Verdict: Carleson iff condition (ii) is
    finite and does not grow over the outer half of the grid.
    """
    table = basis.table
    w = table.weight
    z = np.asarray(z_grid, dtype=complex)
    radii = np.abs(z)
    ratios = spread = None
    if isinstance(measure, RadialMeasure):
        need = max(len(berezin_weights(table, float(r) ** 2)) for r in radii)
        if measure.log_density is None and measure.lo == 0 and math.isinf(measure.hi):
            log_e = np.zeros(need)
        else:
            log_e = measure_moments(table, measure, need - 1) - table.log_s[:need]
        logs = np.empty(radii.size)
        for i, rho in enumerate(radii):
            t = berezin_weights(table, float(rho) ** 2)
            with np.errstate(divide="ignore"):
                logs[i] = logsumexp(np.log(t) + log_e[: t.size])
    elif isinstance(measure, PointMasses):
        a = measure.points
        ra = np.abs(a)
        logs = np.empty(z.size)
        for i, zz in enumerate(z):
            rz = abs(zz)
            lm_zz = eval_kernel_scaled(table, rz * rz).log_modulus
            total = np.empty(a.size)
            for k, ak in enumerate(a):
                prod = ak * np.conj(zz)
                v = eval_kernel_scaled(table, abs(prod), float(np.angle(prod)))
                # far terms sit below the roundoff floor; bound them by it
                mod = max(v.modulus, v.roundoff_bound)
                lm = math.log(mod) if mod > 0 else -math.inf
                # 2 Q = Psi(|a|^2) + Psi(|z|^2) - 2 Psi(|a||z|)
                x = rz * ra[k]
                q2 = float(w.psi_delta(x, ra[k] ** 2 - x) + w.psi_delta(x, rz * rz - x))
                total[k] = 2.0 * lm - lm_zz - q2 + measure.log_weights[k]
            logs[i] = logsumexp(total)
        if lattice is not None:
            from .geometry import lattice_ball_areas

            areas, interior = lattice_ball_areas(lattice)
            ratios = np.exp(np.asarray(measure.log_weights)[interior]) / areas[interior]
            spread = float(ratios.max() / ratios.min())
    else:
        raise TypeError("measure must be a RadialMeasure or PointMasses")
    finite = bool(np.all(np.isfinite(logs)))
    slope = _log_tail_slope(radii, logs)
    verdict = "carleson" if finite and trend(slope) != "growing" else "not-carleson"
    return CarlesonReport(measure.name, radii, logs, slope, ratios, spread, verdict)


def trace_identity_check(basis: NormalizedBasis, rank: int) -> dict:
    """``int T~(z) K(z,z) dmu(z)`` for the projection onto ``e_0 .. e_{rank-1}``.

    ``T~`` and ``K`` both come from the kernel series; the radial integral
    ``pi int_0^inf T~(x) k(x) e^{-Psi(x)} dx`` is done by adaptive quadrature.
    """
    if rank < 0:
        raise ValueError("rank must be nonnegative")
    if rank == 0:
        return {"rank": 0, "integral": 0.0, "error": 0.0}
    table = basis.table
    w = table.weight
    from .weights import phi_inverse

    x_hi = 3.0 * phi_inverse(w, rank + 40.0) + 10.0

    def integrand(x):
        v = eval_kernel_scaled(table, x)
        t = berezin_weights(table, x)[:rank].sum()
        return math.pi * t * math.exp(v.log_modulus)

    peak = phi_inverse(w, max(rank - 1.0, 0.0))
    val, err = integrate.quad(integrand, 0.0, x_hi, points=[peak] if 0 < peak < x_hi else None,
                              epsabs=1e-12, epsrel=1e-11, limit=400)
    return {"rank": rank, "integral": float(val), "error": float(err)}


@dataclass
class BesovDiagnostic:
    m: int
    p: float
    tail_exponent: float
    tail_verdict: str
    full_integral: float
    truncated_integral: float
    rho_max: float


def besov_diagnostic(table: MomentTable, m: int, p: float, rho_max: Optional[float] = None,
                     fit_range=(10.0, 100.0)) -> BesovDiagnostic:
    """Besov-type integral of ``f = z^m`` against the Bergman metric.

    ``full = int (|f'|/beta(z,1))^p K(z,z) e^{-Psi(|z|^2)} dV`` is integrated
    radially with series ``beta`` and ``K`` up to ``rho_max``; beyond it the
    asymptotic integrand ``2 pi rho |f'|^p Phi'(rho^2)^(1 - p/2) / pi`` is used.
    Its log-log slope in ``rho`` over ``fit_range`` is the tail exponent; the
    integral converges iff the exponent is below ``-1 - margin``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    w = table.weight
    rho = np.geomspace(*fit_range, 64)
    log_asym = (p * (math.log(m) + (m - 1) * np.log(rho)) + (1 - p / 2) * w.log_phi1(rho**2)
                + np.log(2.0 * rho))
    expo = float(np.polyfit(np.log(rho), log_asym, 1)[0])
    verdict = "convergent" if expo < -1.0 - SCHATTEN_MARGIN else "divergent"

    if rho_max is None:
        from .kernel import table_reach

        rho_max = min(10.0, math.sqrt(table_reach(table)))

    def log_f(r):
        x = r * r
        v = eval_kernel_scaled(table, x)
        kp, cv = log_derivatives(table, x)
        lam2 = kp + x * cv
        fp = math.log(m) + (m - 1) * math.log(r) if (m > 1 and r > 0) else (math.log(m) if m == 1 else -math.inf)
        return p * fp - 0.5 * p * math.log(lam2) + v.log_modulus + math.log(2.0 * math.pi * r)

    def f(r):
        if r == 0:
            return 0.0
        return math.exp(log_f(r))

    val, _ = integrate.quad(f, 0.0, rho_max, epsabs=0.0, epsrel=1e-9, limit=400)
    if verdict == "divergent":
        full = math.inf
    else:
        # match the asymptotic power law to the series integrand at rho_max
        tail_c = math.exp(log_f(rho_max))
        full = val + tail_c * rho_max / (-expo - 1.0)
    return BesovDiagnostic(m, float(p), expo, verdict, float(full), float(val), float(rho_max))


def polar_quadrature(log_weight: Callable, rho_max: float, n_rho: int = 600, n_phi: int = 64):
    """Nodes and weights for ``int_{|z| <= rho_max} F(z) e^{-Psi(|z|^2)} dV``.

    Composite Gauss-Legendre in ``rho`` (panels of 20 nodes) times the
    trapezoid rule in the angle, which is exact for trigonometric
    polynomials of degree below ``n_phi``.
    """
    g, wg = gauss_legendre(20)
    panels = max(1, n_rho // 20)
    edges = np.linspace(0.0, rho_max, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    rho = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
    wr = (0.5 * (b - a) * wg).ravel() * rho * np.exp(log_weight(rho * rho))
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    z = (rho[:, None] * np.exp(1j * phi[None, :])).ravel()
    wt = (wr[:, None] * np.full(n_phi, 2.0 * math.pi / n_phi)[None, :]).ravel()
    return z, wt


def _rho_cut(w, d_top):
    from .weights import phi_inverse

    # e^{-Psi} x^d is below 1e-40 of its peak well past Phi^{-1}(d_top)
    x = phi_inverse(w, d_top + 1.0)
    while True:
        x *= 1.25
        val = d_top * math.log(x) - float(w.psi(x))
        peak = d_top * math.log(max(phi_inverse(w, d_top), 1e-300)) - float(w.psi(phi_inverse(w, d_top)))
        if val < peak - 95.0:
            return math.sqrt(x)


def basis_norm_oracle(table: MomentTable, d_max: int = 20) -> np.ndarray:
    """Relative gaps between 2D quadrature of ``int |z^d|^2 e^{-Psi} dV`` and ``pi s_d``."""
    w = table.weight
    z, wt = polar_quadrature(lambda x: -w.psi(x), _rho_cut(w, 2 * d_max), n_rho=800)
    absz = np.abs(z)
    out = np.empty(d_max + 1)
    for d in range(d_max + 1):
        val = float(wt @ absz ** (2 * d))
        out[d] = abs(math.log(val) - math.log(math.pi) - table.log_s[d])
    return out


def dense_hankel_oracle(table: MomentTable, m: int, d_max: int = 12, l_max: Optional[int] = None) -> dict:
    """Gram matrix of ``(I - P)(conj(z)^m e_j)``, ``j <= d_max``, by 2D quadrature.

    Inner products and the projection coefficients onto ``e_0 .. e_{l_max}``
    are all computed with the same polar rule; the basis norms also come from
    the quadrature, so nothing here uses the moment table except for the
    closed form it is compared with.
    """
    w = table.weight
    l_max = d_max + m + 4 if l_max is None else l_max
    top = max(d_max + m, l_max)
    z, wt = polar_quadrature(lambda x: -w.psi(x), _rho_cut(w, 2 * top), n_rho=800,
                             n_phi=4 * top + 8)
    powers = z[None, :] ** np.arange(top + 1)[:, None]
    norms = np.sqrt(np.real(powers * np.conj(powers)) @ wt)
    e = powers / norms[:, None]
    g = np.conj(z)[None, :] ** m * e[: d_max + 1]
    coef = (g * wt) @ np.conj(e[: l_max + 1]).T  # <g_j, e_l>
    gram = (g * wt) @ np.conj(g).T - coef @ np.conj(coef).T
    lam = hankel_lambda(table.log_s, m, d_max)
    off = gram - np.diag(np.diag(gram))
    return {
        "gram": gram,
        "lambda": lam,
        "max_offdiag": float(np.abs(off).max()),
        "max_diag_error": float(np.abs(np.real(np.diag(gram)) - lam).max()),
    }
