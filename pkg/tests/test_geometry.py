import math

import numpy as np
import pytest

from fockspace import build_moment_table, kernel_table, parse_weight
from fockspace.geometry import (
    MetricField,
    ball_volume,
    build_lattice,
    distance,
    ellipsoid_distance,
    ellipsoid_distances,
    grid_distance,
    lattice_checks,
    lattice_density,
    load_lattice,
    metric,
    save_lattice,
    triangle_check,
)


@pytest.fixture(scope="module")
def quad2():
    return build_moment_table(parse_weight("monomial:p=2"), 2, 200)


def test_metric_quadratic_radial(quad_table):
    s = metric(quad_table, 5.0, 1.0)
    assert s.alpha2 == pytest.approx(100.0, rel=1e-14)  # Phi'(25)
    assert 0.95 <= s.ratio <= 1.05


def test_metric_quadratic_tangential(quad2):
    s = metric(quad2, [5.0, 0.0], [0.0, 1.0])
    assert s.alpha2 == pytest.approx(50.0, rel=1e-14)  # Psi'(25)
    assert 0.95 <= s.ratio <= 1.05


def test_metric_linear_is_euclidean(lin_table):
    for z in (0.0, 2 + 1j, 9j):
        s = metric(lin_table, z, 1j)
        assert s.beta2 == pytest.approx(1.0, abs=1e-12)


def test_metric_homogeneous(quad2):
    z, xi, c = [1 + 2j, -0.5j], [0.3, 1 - 1j], 2.5 - 1.5j
    a = metric(quad2, z, xi).beta2
    b = metric(quad2, z, [c * x for x in xi]).beta2
    assert b == pytest.approx(abs(c) ** 2 * a, rel=1e-14)


def test_metric_rejects_zero_direction(lin_table):
    with pytest.raises(ValueError):
        metric(lin_table, 1.0, 0.0)


@pytest.mark.parametrize("method", ["segment", "grid", "ellipsoid"])
def test_distance_linear_euclidean(lin_table, method):
    res = distance(lin_table, 1.0, 4.0, method=method)
    assert res.rho_hat == pytest.approx(3.0, rel=2e-3)
    assert res.kind == ("upper" if method == "segment" else "approx")
    assert distance(lin_table, 2j, 2j, method=method).rho_hat == 0.0


def test_distance_quadratic_arc(quad_table):
    res = distance(quad_table, 5.0, 5.0 * np.exp(0.01j))
    assert res.rho_hat == pytest.approx(0.01 * 5.0 * 10.0, rel=0.05)


def test_grid_distance_needs_one_variable(quad2):
    with pytest.raises(ValueError, match="n = 1"):
        distance(quad2, [1.0, 0.0], [0.0, 1.0], method="grid")
    with pytest.raises(ValueError):
        distance(quad2, [1.0, 0.0], [0.0, 1.0], method="geodesic")


def test_segment_bounds_grid(quad_table):
    fld = MetricField(quad_table, 4.0)
    rng = np.random.default_rng(3)
    for _ in range(8):
        z, w = 2.0 * np.sqrt(rng.uniform(size=2)) * np.exp(2j * np.pi * rng.uniform(size=2))
        seg = distance(quad_table, z, w, field_=fld).rho_hat
        fine, coarse = grid_distance(fld, z, w)
        assert seg >= fine - abs(fine - coarse) - 1e-9


def test_grid_distance_converges_from_above(quad_table):
    fld = MetricField(quad_table, 4.0)
    fine, coarse = grid_distance(fld, 0.5, 2.0 + 1j)
    assert fine <= coarse
    assert abs(fine - coarse) < 0.02 * fine


def test_triangle_inequality(quad_table):
    fld = MetricField(quad_table, 6.0)
    rng = np.random.default_rng(11)
    triples = 2.0 * np.sqrt(rng.uniform(size=(30, 3))) * np.exp(2j * np.pi * rng.uniform(size=(30, 3)))
    rep = triangle_check(fld, triples)
    assert rep["triples"] == 30
    assert rep["violations"] == 0


def test_ball_volume_linear(lin_table):
    for z in (0.0, 3 + 4j):
        v = ball_volume(lin_table, z, 1.0)
        assert v.measured == pytest.approx(math.pi, rel=0.05)


def test_ball_volume_quadratic(quad_table):
    v = ball_volume(quad_table, 5.0, 1.0)
    assert v.measured == pytest.approx(math.pi / 100.0, rel=0.10)
    ratios = [ball_volume(quad_table, z, 1.0) for z in (3.0, 5.0, 8.0)]
    model = [b.measured / b.model_estimate for b in ratios]
    stated = [b.measured / b.stated_estimate for b in ratios]
    np.testing.assert_allclose(model, math.pi, rtol=0.1)
    # the printed scale drifts with |z|
    assert max(stated) / min(stated) > 2


def test_ball_volume_monte_carlo_matches_grid(quad_table):
    g = ball_volume(quad_table, 4.0, 1.0, sampler="grid")
    m = ball_volume(quad_table, 4.0, 1.0, sampler="mc", seed=5, budget=40_000)
    assert abs(g.measured - m.measured) < 4 * m.std_error + g.std_error
    again = ball_volume(quad_table, 4.0, 1.0, sampler="mc", seed=5, budget=40_000)
    assert again.measured == m.measured


def test_ball_volume_two_variables():
    t = kernel_table(parse_weight("linear:a=1"), 60.0, n=2)
    v = ball_volume(t, [1.0, 0.0], 1.0, budget=40_000)
    # chord lengths bound the distance from above, so the unit ball is at most pi^2/2
    assert v.measured <= math.pi**2 / 2 * 1.05
    assert v.measured > 0.5 * math.pi**2 / 2


@pytest.mark.parametrize("layout", ["rings", "greedy"])
def test_lattice_invariants(lin_table, layout):
    lat = build_lattice(lin_table, 4.0, 1.0, layout=layout)
    chk = lattice_checks(lat)
    assert chk["min_separation"] >= 1.0
    assert chk["max_cover"] < 1.0
    assert chk["reachable_fraction"] == 1.0
    assert np.all(np.abs(lat.points) <= 4.0)


def test_lattice_quadratic_density_grows_linearly(quad_table):
    # spacing ~ 1/(2|z|) radially and 1/|z| along circles: density ~ |z|^2, inverse spacing ~ |z|
    lat = build_lattice(quad_table, 2.5, 0.5, layout="greedy")
    dens = lattice_density(lat, inner=0.4)
    assert dens["linear_slope"] == pytest.approx(1.0, abs=0.1)


def test_lattice_ellipsoid_backend_two_variables():
    t = build_moment_table(parse_weight("linear:a=1"), 2, 40)
    lat = build_lattice(t, 1.2, 1.0, backend="ellipsoid")
    chk = lattice_checks(lat, t)
    assert lat.points.shape[1] == 2
    assert chk["min_separation"] >= 1.0 and chk["max_cover"] < 1.0


def test_ellipsoid_distances_vectorized():
    t = build_moment_table(parse_weight("monomial:p=2"), 2, 40)
    rng = np.random.default_rng(2)
    z = rng.normal(size=2) + 1j * rng.normal(size=2)
    ws = rng.normal(size=(6, 2)) + 1j * rng.normal(size=(6, 2))
    ws[0] = 0.0
    x2 = float(np.vdot(z, z).real)
    plain = ellipsoid_distances(t, z, ws)
    for w, d in zip(ws, plain):
        pw = np.vdot(z, w) / x2 * z
        # Psi = x^2: Phi' = 4x and Psi' = 2x
        assert d == pytest.approx(np.linalg.norm(z - pw) * math.sqrt(4 * x2)
                                  + np.linalg.norm(w - pw) * math.sqrt(2 * x2), rel=1e-12)
    sym = ellipsoid_distances(t, z, ws, symmetric=True)
    for w, d in zip(ws, sym):
        assert d == pytest.approx(max(ellipsoid_distance(t, z, w), ellipsoid_distance(t, w, z)), rel=1e-14)
    assert np.all(sym >= plain)


def test_lattice_errors(lin_table):
    with pytest.raises(ValueError):
        build_lattice(lin_table, 4.0, 0.0)
    with pytest.raises(ValueError):
        build_lattice(lin_table, 4.0, 1.0, layout="hex")
    with pytest.raises(ValueError):
        build_lattice(build_moment_table(parse_weight("linear:a=1"), 2, 40), 1.0, 1.0)


def test_lattice_file_round_trip(lin_table, tmp_path):
    lat = build_lattice(lin_table, 3.0, 1.0)
    path = save_lattice(lat, tmp_path / "lat.csv")
    assert path.read_text().splitlines()[0] == "index,re,im"
    np.testing.assert_array_equal(load_lattice(path), lat.points)
