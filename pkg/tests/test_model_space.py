import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wpharmonic.model_space import (P0, ChartError, ConvexRegion, ModelPoint, c_star, complement_gap,
                                    distance, distances, from_homogeneous, gamma_gap, geodesic_bvp,
                                    geodesic_ivp, interpolate, log_map, pair_geometry, profile_phi,
                                    scale, symmetric_geodesic, to_homogeneous)

C_STAR = 0.3734171001110933  # quad of u^4 (1 - u^6)^(-1/2) on [0, 1], frozen

rho_s = st.floats(0.05, 5.0)
phi_s = st.floats(-20.0, 20.0)


def test_c_star_matches_quadrature():
    q, _ = integrate.quad(lambda u: u ** 4 / math.sqrt(1 - u ** 6), 0, 1, limit=200)
    assert abs(q - C_STAR) < 1e-12
    assert abs(c_star() - q) < 1e-12


def test_interior_point_needs_positive_rho():
    with pytest.raises(ValueError):
        ModelPoint(0.0, 1.0)
    assert P0.is_basepoint and repr(P0) == "P0"


def test_homogeneous_chart_round_trip():
    p = ModelPoint(0.7, -1.3)
    h = to_homogeneous(p)
    assert h.Phi == pytest.approx(0.7 ** 3 * -1.3)
    q = from_homogeneous(h)
    assert q.rho == pytest.approx(p.rho) and q.phi == pytest.approx(p.phi)


def test_distance_to_basepoint_is_rho():
    assert distance(P0, ModelPoint(1.5, 3.0)) == 1.5
    assert distance(P0, P0) == 0.0


def test_vertical_distance_is_rho_difference():
    assert distance(ModelPoint(1.0, 0.4), ModelPoint(3.0, 0.4)) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(rho_s, phi_s, rho_s, phi_s)
def test_compiled_and_numpy_routes_agree(r1, f1, r2, f2):
    a = pair_geometry(r1, f1, r2, f2, backend="compiled")
    b = pair_geometry(r1, f1, r2, f2, backend="numpy")
    assert a.dist[0] == pytest.approx(b.dist[0], rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(rho_s, phi_s, rho_s, phi_s, st.floats(0.2, 5.0))
def test_scaling_is_a_homothety(r1, f1, r2, f2, lam):
    p, q = ModelPoint(r1, f1), ModelPoint(r2, f2)
    d = distance(p, q)
    assert distance(scale(lam, p), scale(lam, q)) == pytest.approx(lam * d, rel=1e-6, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(rho_s, phi_s, rho_s, phi_s, rho_s, phi_s)
def test_triangle_inequality(r1, f1, r2, f2, r3, f3):
    d12 = float(distances(r1, f1, r2, f2))
    d23 = float(distances(r2, f2, r3, f3))
    d13 = float(distances(r1, f1, r3, f3))
    assert d13 <= d12 + d23 + 1e-9 * (1 + d13)


def test_distance_is_below_route_through_basepoint():
    r = np.array([0.3, 1.0, 2.0])
    d = distances(r, 0 * r, r, 0 * r + 50.0)
    assert np.all(d < 2 * r)


def test_clairaut_and_speed_conserved():
    path = geodesic_ivp(ModelPoint(1.0, 0.0), (0.3, 0.8), 3.0, step=1e-3)
    J = path.clairaut_values()
    assert np.max(np.abs(J - J[0])) / path.length <= 1e-8
    assert np.max(np.abs(path.speed_defect())) / path.length <= 1e-8


def test_bvp_reaches_the_endpoint_and_has_distance_length():
    p, q = ModelPoint(1.0, 0.0), ModelPoint(1.4, 0.6)
    res = geodesic_bvp(p, q, step=1e-4)
    assert res.status == "ok"
    assert res.endpoint_error < 1e-8
    assert res.length == pytest.approx(distance(p, q), rel=1e-10)
    assert res.path.rho[-1] == pytest.approx(1.4, abs=1e-8)


def test_bvp_vertical_segment_has_length_two():
    res = geodesic_bvp(ModelPoint(1.0, 0.0), ModelPoint(3.0, 0.0))
    assert res.length == pytest.approx(2.0, abs=1e-12)


def test_bvp_rejects_basepoint():
    with pytest.raises(ChartError):
        geodesic_bvp(P0, ModelPoint(1.0, 0.0))


def test_log_map_has_distance_norm():
    p, q = ModelPoint(0.8, 0.1), ModelPoint(1.1, 1.0)
    dr, df = log_map(p, q)
    assert math.hypot(dr, p.rho ** 3 * df) == pytest.approx(distance(p, q), rel=1e-8)


@pytest.mark.parametrize("rho0", [0.25, 0.5, 1.0, 2.0])
def test_symmetric_geodesic_constant(rho0):
    sg = symmetric_geodesic(rho0)
    assert sg.phi_infinity * rho0 ** 2 == pytest.approx(C_STAR, abs=1e-4)


def test_profile_limit_is_phi_infinity():
    assert profile_phi(0.5, 1e6) == pytest.approx(C_STAR / 0.25, rel=1e-9)


def test_interpolation_hits_endpoints_and_splits_distance():
    p, q = ModelPoint(0.6, -0.4), ModelPoint(1.3, 0.9)
    d = distance(p, q)
    m = interpolate(p, q, 0.3)
    assert distance(p, m) == pytest.approx(0.3 * d, rel=1e-7)
    assert distance(m, q) == pytest.approx(0.7 * d, rel=1e-7)


# regions

def test_region_examples():
    reg = ConvexRegion(0.5)
    assert reg.contains(ModelPoint(1.0, 0.1))
    assert not reg.contains(P0)
    assert not reg.contains(ModelPoint(0.4, 0.0))
    assert reg.distance_to(0.0, 0.0)[0] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(rho_s, phi_s, st.floats(0.3, 3.0))
def test_region_scaling_and_nesting(r, f, lam):
    reg = ConvexRegion(0.5)
    inside = reg.contains(ModelPoint(r, f))
    assert ConvexRegion(0.5 * lam).contains(scale(lam, ModelPoint(r, f))) == inside
    if ConvexRegion(0.8).contains(ModelPoint(r, f)):
        assert inside


@settings(max_examples=30, deadline=None)
@given(rho_s, phi_s, rho_s, phi_s)
def test_projection_idempotent_and_nonexpansive(r1, f1, r2, f2):
    reg = ConvexRegion(0.5)
    a = reg.project(ModelPoint(r1, f1))
    b = reg.project(ModelPoint(r2, f2))
    aa = reg.project(a)
    assert distance(a, aa) <= 1e-7
    assert distance(a, b) <= distance(ModelPoint(r1, f1), ModelPoint(r2, f2)) + 1e-6


def test_gamma_gap_tends_to_r():
    gaps = [gamma_gap(p, 1.0) for p in (0.2, 0.1, 0.05)]
    err = np.abs(np.array(gaps) - 1.0)
    assert np.all(np.diff(err) < 0)
    assert err[-1] <= 2 * 0.05


def test_gamma_gap_needs_rho0_below_r():
    with pytest.raises(ValueError):
        gamma_gap(1.0, 0.5)


def test_complement_bound():
    assert complement_gap(0.1, 1.0) >= gamma_gap(0.1, 1.0) * (1 - 1e-6)
