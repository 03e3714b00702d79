import math

import mpmath
import numpy as np
import pytest

from fockspace import build_moment_table, eval_kernel_scaled, kernel_table, log_derivatives, parse_weight
from fockspace.kernel import (
    TableTooShort,
    offdiag_envelope_check,
    qx_profile,
    required_dmax,
    table_reach,
)


def mp_log_kernel_quadratic(r):
    # Psi = x^2: s_d = Gamma((d+1)/2)/2, so k(r) = sum 2 r^d / (pi Gamma((d+1)/2))
    with mpmath.workdps(30):
        r = mpmath.mpf(r)
        top = int(2 * r * r + 40 * r + 60)
        k = mpmath.fsum(2 * r**d / mpmath.gamma(mpmath.mpf(d + 1) / 2) for d in range(top)) / mpmath.pi
        return float(mpmath.log(k))


def test_linear_closed_form(lin_table):
    for r in (0.0, 0.3, 5.0, 40.0, 99.0):
        v = eval_kernel_scaled(lin_table, r)
        assert v.log_modulus == pytest.approx(-math.log(math.pi), abs=1e-12)
        assert v.phase == 0.0
        assert v.value() == pytest.approx(math.exp(r) / math.pi, rel=1e-12)


def test_linear_off_diagonal(lin_table):
    # e^{-r}|exp(r e^{i theta})| = exp(r (cos theta - 1))
    for r, th in ((3.0, 0.4), (10.0, -1.2), (20.0, 0.9)):
        v = eval_kernel_scaled(lin_table, r, th)
        assert v.log_modulus == pytest.approx(r * (math.cos(th) - 1) - math.log(math.pi), abs=1e-9)
        assert math.remainder(v.phase - r * math.sin(th), 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_cancellation_within_roundoff_bound(lin_table):
    # the sum cancels by e^37 here; only the reported bound is meaningful
    v = eval_kernel_scaled(lin_table, 20.0, 2.5)
    exact = math.exp(20.0 * (math.cos(2.5) - 1)) / math.pi
    assert abs(v.modulus - exact) <= v.roundoff_bound + v.truncation_bound


def test_quadratic_against_mpmath(quad_table):
    for r in (0.5, 2.0, 7.0, 30.0):
        v = eval_kernel_scaled(quad_table, r)
        assert v.log_modulus + r * r == pytest.approx(mp_log_kernel_quadratic(r), rel=1e-12)


def test_conjugate_symmetry(quad_table):
    a, b = eval_kernel_scaled(quad_table, 5.0, 0.7), eval_kernel_scaled(quad_table, 5.0, -0.7)
    assert a.log_modulus == pytest.approx(b.log_modulus, abs=1e-13)
    assert a.phase == pytest.approx(-b.phase, abs=1e-13)


def test_bounds_reported(lin_table):
    v = eval_kernel_scaled(lin_table, 50.0, 1.0)
    assert 0 <= v.truncation_bound < 1e-15
    assert v.roundoff_bound > 0
    assert v.terms_used > 50
    assert v.sigma == 50.0  # the scaling exponent Psi(r)


@pytest.mark.parametrize("label", ["linear:a=1", "monomial:p=2", "monomial:p=3", "exp"])
def test_required_dmax_is_sufficient(label):
    w = parse_weight(label)
    r = 5.0 if w.name == "exp" else 30.0
    t = kernel_table(w, r)
    assert t.d_max == required_dmax(w, r)
    assert table_reach(t) >= r
    eval_kernel_scaled(t, r)
    short = build_moment_table(w, 1, t.d_max // 2, method="hybrid")
    with pytest.raises(TableTooShort) as err:
        eval_kernel_scaled(short, r)
    assert err.value.required == t.d_max


def test_log_derivatives_linear(lin_table):
    for r in (0.0, 1.0, 50.0):
        kp, cv = log_derivatives(lin_table, r)
        assert kp == pytest.approx(1.0, abs=1e-12)
        assert cv == pytest.approx(0.0, abs=1e-12)


def test_series_and_continuum_agree(quad_table):
    # the continuum form inherits the sigma_d^-4 error of the Laplace moments
    gaps = []
    for r, tol in ((10.0, 1e-4), (40.0, 1e-7), (90.0, 1e-8)):
        s = log_derivatives(quad_table, r, "series")
        c = log_derivatives(quad_table, r, "continuum")
        assert c.kp_over_k == pytest.approx(s.kp_over_k, rel=tol)
        assert c.curvature == pytest.approx(s.curvature, rel=tol)
        gaps.append(abs(c.kp_over_k / s.kp_over_k - 1))
    assert gaps[0] > gaps[1] > gaps[2]


def test_auto_mode_falls_back():
    w = parse_weight("monomial:p=3")
    t = build_moment_table(w, 1, 40)
    with pytest.raises(TableTooShort):
        log_derivatives(t, 200.0, "series")
    kp, cv = log_derivatives(t, 200.0, "auto")
    # large-r regime: r kp + r^2 cv ~ r Phi'(r)
    assert (kp + 200.0 * cv) / float(w.phi1(200.0)) == pytest.approx(1.0, abs=0.01)


def test_overflowing_radius_rejected():
    t = build_moment_table(parse_weight("exp"), 1, 10)
    with pytest.raises(ValueError, match="overflows"):
        log_derivatives(t, 800.0, "auto")


def test_envelope_constants(quad_table):
    rep = offdiag_envelope_check(quad_table, [5.0, 20.0], np.linspace(-math.pi, math.pi, 33))
    for c in (rep.c_near, rep.c_far, rep.c_lower):
        assert 0 < c < math.inf
    assert len(rep.rows) == 66


def test_qx_linear_value():
    rep = qx_profile(parse_weight("linear:a=1"), 3.0, [5.0])
    # (25 + 9)/2 - 15
    assert rep.rows[0][1] == pytest.approx(2.0, abs=1e-12)


def test_qx_window_quadratic():
    rep = qx_profile(parse_weight("monomial:p=2"), 10.0)
    assert rep.ratio == pytest.approx(1.0, abs=0.05)
    assert rep.min_margin_small > 0 and rep.min_margin_large > 0
    regions = {row[3] for row in rep.rows}
    assert regions == {"small", "window", "large"}
    with pytest.raises(ValueError):
        qx_profile(parse_weight("monomial:p=2"), 0.0)
