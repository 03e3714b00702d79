import math

import mpmath
import numpy as np
import pytest
from scipy.special import gammainc, gammaln

from fockspace import build_moment_table, parse_weight
from fockspace.geometry import build_lattice
from fockspace.operators import (
    NormalizedBasis,
    PointMasses,
    RadialMeasure,
    basis_norm_oracle,
    berezin_weights,
    besov_diagnostic,
    bloch_seminorm,
    carleson_test,
    classify_schatten,
    dense_hankel_oracle,
    hankel_lambda,
    hankel_spectrum,
    measure_moments,
    mo_profile,
    toeplitz_diag,
    trace_identity_check,
)


def quad_kernel_parts(x):
    """Psi = x^2: k(x) = (2/pi) g(x), g = 1/sqrt(pi) + x e^{x^2} erfc(-x), with g' and g''."""
    sp = mpmath.sqrt(mpmath.pi)
    e = mpmath.exp(x * x) * mpmath.erfc(-x)
    g = 1 / sp + x * e
    g1 = e * (1 + 2 * x * x) + 2 * x / sp
    g2 = (2 * x * e + 2 / sp) * (1 + 2 * x * x) + 4 * x * e + 2 / sp
    return g, g1, g2


def mp_besov_quadratic(p):
    """int_0^inf lam2(rho^2)^(-p/2) k(rho^2) e^{-rho^4} 2 pi rho d rho for f = z."""
    with mpmath.workdps(80):
        def f(rho):
            x = rho * rho
            g, g1, g2 = quad_kernel_parts(x)
            kp = g1 / g
            lam2 = kp + x * (g2 / g - kp * kp)
            return lam2 ** (-mpmath.mpf(p) / 2) * 4 * g * mpmath.exp(-x * x) * rho

        return float(mpmath.re(mpmath.quad(f, [0, 1, 3, 10, 30, 100, mpmath.inf])))


def test_basis_requires_one_variable():
    with pytest.raises(ValueError):
        NormalizedBasis(build_moment_table(parse_weight("linear:a=1"), 2, 10))


def test_hankel_lambda_linear(lin_table):
    ls = lin_table.log_s
    np.testing.assert_allclose(hankel_lambda(ls, 1, 200), 1.0, atol=1e-9)
    d = np.arange(201.0)
    # (d+1)(d+2) - d(d-1) = 4d + 2 once d >= 2
    want = np.where(d >= 2, 4 * d + 2, (d + 1) * (d + 2))
    np.testing.assert_allclose(hankel_lambda(ls, 2, 200), want, rtol=1e-9)


def test_hankel_lambda_quadratic(quad_table):
    ls = quad_table.log_s
    lam = hankel_lambda(ls, 2, 500)
    assert lam[0] == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(lam[1:], 1.0, atol=1e-9)
    lam1 = hankel_lambda(ls, 1, 3)
    # Gamma(d/2 + 1)/Gamma((d+1)/2) - Gamma((d+1)/2)/Gamma(d/2)
    assert lam1[0] == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    assert lam1[1] == pytest.approx(math.sqrt(math.pi) / 2 - 1 / math.sqrt(math.pi), rel=1e-10)
    d = 3
    exact = math.exp(gammaln(d / 2 + 1) - gammaln((d + 1) / 2)) - math.exp(gammaln((d + 1) / 2) - gammaln(d / 2))
    assert lam1[3] == pytest.approx(exact, rel=1e-9)


def test_hankel_lambda_errors(lin_table):
    with pytest.raises(ValueError):
        hankel_lambda(lin_table.log_s, 0)
    with pytest.raises(ValueError):
        hankel_lambda(lin_table.log_s[:10], 1, 20)


def test_spectrum_verdicts(lin_table, quad_table):
    cases = [(lin_table, 1, "bounded", "non-compact"), (lin_table, 2, "unbounded", "non-compact"),
             (quad_table, 1, "bounded", "compact"), (quad_table, 2, "bounded", "non-compact"),
             (quad_table, 3, "unbounded", "non-compact")]
    for table, m, bounded, compact in cases:
        hs = hankel_spectrum(NormalizedBasis(table), m, min(5000, table.d_max - m))
        assert (hs.boundedness, hs.compactness) == (bounded, compact), (table.weight.label, m)
        d = hs.as_dict()
        assert d["m"] == m and set(d["schatten"]) >= {"1.0", "2.0"}


def test_classify_schatten_power_laws():
    d = np.arange(1, 20001)
    v = d ** -1.0
    assert classify_schatten(v, 1.0, d).verdict == "divergent"
    r = classify_schatten(v, 3.0, d)
    assert r.verdict == "convergent"
    assert r.tail_exponent == pytest.approx(-1.5, abs=1e-6)
    assert r.partial_sum == pytest.approx(np.sum(v**1.5))
    # a 1.02 doubling-ratio rule would call this divergent; the tail exponent is -1.125
    assert classify_schatten(d ** -0.5, 4.5, d).verdict == "convergent"


def test_berezin_weights_sum_to_one(quad_table):
    for r in (0.0, 1.0, 30.0):
        t = berezin_weights(quad_table, r)
        assert t.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(t >= 0)


def test_mo_profile_values(lin_table, quad_table):
    grid = np.linspace(0.0, 8.0, 9)
    lin = mo_profile(NormalizedBasis(lin_table), 1, grid)
    np.testing.assert_allclose(lin.mo_squared, 1.0, atol=1e-12)
    q = mo_profile(NormalizedBasis(quad_table), 1, grid)
    # at the origin MO^2 is the first Hankel eigenvalue 1/sqrt(pi)
    assert q.mo_squared[0] == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    assert q.bmo_verdict == "bounded" and q.vmo_verdict == "decaying"


def test_bloch_values(quad_table, lin_table):
    grid = np.linspace(0.0, 8.0, 17)
    b = bloch_seminorm(quad_table, [0.0, 1.0], grid)
    # beta(0, 1)^2 = s_0 / s_1 = sqrt(pi)
    assert b.profile[0] == pytest.approx(math.pi**-0.25, rel=1e-12)
    assert b.little_bloch == "decaying"
    lin = bloch_seminorm(lin_table, [0.0, 1.0], grid)
    np.testing.assert_allclose(lin.profile, 1.0, atol=1e-12)
    assert lin.little_bloch != "decaying"
    # |f'(z)| / beta <= 2 sqrt 2 MO(f)
    mo = mo_profile(NormalizedBasis(quad_table), 1, grid)
    assert np.all(b.profile <= 2 * math.sqrt(2) * mo.mo + 1e-9)


def test_toeplitz_lebesgue_identity(quad_table):
    td = toeplitz_diag(NormalizedBasis(quad_table), RadialMeasure.lebesgue(), 40)
    np.testing.assert_allclose(td.entries, 1.0, atol=1e-12)
    assert td.schatten[1.0].verdict == "divergent"


def test_toeplitz_disc_gamma(lin_table):
    td = toeplitz_diag(NormalizedBasis(lin_table), RadialMeasure.lebesgue(1.0), 60)
    np.testing.assert_allclose(td.entries, gammainc(np.arange(61) + 1.0, 1.0), rtol=1e-10, atol=1e-300)
    assert td.schatten[1.0].verdict == "convergent"
    assert td.measure == "lebesgue|z|<=1"


def test_toeplitz_sampled_density(lin_table):
    x = np.linspace(0.0, 50.0, 11)
    m = RadialMeasure.from_samples("twice", x, np.full_like(x, 2.0))
    # restricted to |z|^2 <= 50 the low entries are 2 P(d+1, 50)
    td = toeplitz_diag(NormalizedBasis(lin_table), m, 5)
    np.testing.assert_allclose(td.entries, 2 * gammainc(np.arange(6) + 1.0, 50.0), rtol=1e-10)
    with pytest.raises(TypeError):
        toeplitz_diag(NormalizedBasis(lin_table), PointMasses("p", np.zeros(1), np.zeros(1)))


def test_measure_moments_restricted(lin_table):
    mu = measure_moments(lin_table, RadialMeasure.lebesgue(2.0), 3)
    # int_0^4 x^d e^-x dx = d! P(d+1, 4)
    d = np.arange(4.0)
    np.testing.assert_allclose(np.exp(mu), np.exp(gammaln(d + 1)) * gammainc(d + 1, 4.0), rtol=1e-12)


def test_carleson_lebesgue(quad_table):
    rep = carleson_test(NormalizedBasis(quad_table), RadialMeasure.lebesgue(), np.linspace(0, 9, 20))
    np.testing.assert_allclose(rep.condition_ii, 1.0, atol=1e-10)
    assert rep.verdict == "carleson" and rep.lattice_ratios is None


def test_carleson_growing_density(quad_table):
    w = quad_table.weight
    grow = RadialMeasure("growing", lambda x: 0.5 * w.psi(x))
    rep = carleson_test(NormalizedBasis(quad_table), grow, np.linspace(0, 4, 12))
    assert rep.verdict == "not-carleson"


def test_carleson_lattice(lin_table):
    lat = build_lattice(lin_table, 6.0, 1.0)
    pm = PointMasses.lattice_measure(lin_table, lat.points)
    # linear weight: K(a,a) e^{-|a|^2} = 1/pi, so every mass is pi
    np.testing.assert_allclose(pm.log_weights, math.log(math.pi), atol=1e-12)
    rep = carleson_test(NormalizedBasis(lin_table), pm, np.linspace(0, 3.5, 8) * np.exp(0.3j), lattice=lat)
    assert rep.verdict == "carleson"
    assert rep.ratio_spread <= 10


@pytest.mark.parametrize("rank", [0, 1, 2, 3])
def test_trace_identity(quad_table, rank):
    assert trace_identity_check(NormalizedBasis(quad_table), rank)["integral"] == pytest.approx(rank, abs=1e-9)


def test_trace_rank_negative(quad_table):
    with pytest.raises(ValueError):
        trace_identity_check(NormalizedBasis(quad_table), -1)


def test_besov_quadratic_against_mpmath(quad_table):
    for p in (5.0, 6.0):
        b = besov_diagnostic(quad_table, 1, p)
        assert b.tail_exponent == pytest.approx(3.0 - p, abs=1e-9)
        assert b.tail_verdict == "convergent"
        assert b.full_integral == pytest.approx(mp_besov_quadratic(p), rel=1e-8)


def test_besov_divergent(quad_table, lin_table):
    b = besov_diagnostic(quad_table, 1, 3.0)
    assert b.tail_verdict == "divergent" and b.full_integral == math.inf
    assert besov_diagnostic(lin_table, 1, 6.0).tail_verdict == "divergent"
    with pytest.raises(ValueError):
        besov_diagnostic(lin_table, 1, 1.5)


def test_dense_oracles(lin_table, quad_table):
    for t in (lin_table, quad_table):
        assert basis_norm_oracle(t, 15).max() < 1e-9
        for m in (1, 3):
            o = dense_hankel_oracle(t, m, 8)
            assert o["max_offdiag"] < 1e-8
            np.testing.assert_allclose(o["lambda"], hankel_lambda(t.log_s, m, 8), rtol=1e-8)
