import math

import numpy as np
import pytest

from conftest import mesh, solved
from wpharmonic import analysis as A
from wpharmonic.model_space import P0, ModelPoint, distance

PTS = np.random.default_rng(0).uniform(-0.7, 0.7, (20, 2))


def test_line_profile_values():
    u, _ = solved("line", 0.04)
    p = A.energy_profile(u, radii=(0.2, 0.3, 0.4, 0.5))
    assert p.E[-1] == pytest.approx(math.pi / 4, rel=1e-6)
    assert p.I[-1] == pytest.approx(math.pi / 8, rel=1e-6)
    assert A.order_at(p) == pytest.approx(1.0, abs=0.01)


def test_clipping_routes_agree_on_the_line():
    u, _ = solved("line", 0.04)
    radii = (0.3, 0.5)
    rec = A.energy_profile(u, radii=radii, clip="recovered").E
    sim = A.energy_profile(u, radii=radii, clip="simplex").E
    assert np.allclose(rec, sim, rtol=1e-6)


def test_quadratic_order_and_monotone_ratio():
    u, _ = solved("quad", 0.02)
    p = A.energy_profile(u, radii=(0.1, 0.15, 0.2, 0.3, 0.4, 0.5))
    assert all(p.monotone_flags().values())
    assert A.order_at(p) == pytest.approx(2.0, abs=0.02)


def test_constant_map_is_degenerate():
    m = mesh(0.08)
    from wpharmonic.solver import boundary_map, solve_dirichlet
    u, _ = solve_dirichlet(m, boundary_map(m, lambda t: 0 * t + 1.0, lambda t: 0 * t))
    p = A.energy_profile(u, radii=(0.4, 0.5))
    assert p.degenerate
    with pytest.raises(A.DataQualityError):
        A.order_at(p)


def test_epsilon_energy_of_the_line():
    # (1/eps^3) int_{|y|=eps} y_1^2 = pi, normalized by q_2 = pi
    e = A.epsilon_energy(A.line_map(), (0.0, 0.0), 0.1)
    assert e.normalized == pytest.approx(1.0, rel=1e-9)


def test_epsilon_energy_integrates_to_discrete_energy():
    u, _ = solved("line", 0.04)
    assert A.epsilon_energy_crosscheck(u)["rel_diff"] <= 0.05


@pytest.mark.parametrize("src, order", [(A.line_map(), 1.0), (A.quadratic_map(), 2.0)])
def test_homogeneous_blowups_are_fixed(src, order):
    seq = A.blowup_sequence(src, sigmas=(0.4, 0.2, 0.1, 0.05))
    pm = A.pullback_matrix(seq, PTS)
    assert max(pm["cauchy"]) <= 1e-6
    assert np.allclose(seq.unit_I, 1.0, atol=1e-3)
    assert seq.recursion_defect <= 1e-6
    assert seq.lower_bound_ok
    assert np.allclose(seq.lambda_half, 2 ** order, rtol=1e-6)


def test_blowup_of_constant_center_raises():
    flat = A.AnalyticMap(lambda p: (np.zeros(len(p), np.int64), np.ones(len(p)), np.zeros(len(p))), "flat")
    with pytest.raises(A.DegenerateCenterError):
        A.blowup_sequence(flat, sigmas=(0.4, 0.2))


def test_two_sheet_structure():
    st = A.tangent_structure(A.two_sheet_map(), mesh(0.04))
    assert (st.k, st.A) == (2, 2)
    assert st.alpha == pytest.approx(1.0, abs=1e-3)
    assert np.allclose(st.arcs, math.pi, atol=1e-3)
    assert A.piecewise_function_check(A.two_sheet_map(), st)["ok"]


def test_folded_map_has_one_class():
    st = A.tangent_structure(A.folded_map(), mesh(0.04))
    assert (st.k, st.A) == (2, 1)


def test_normalization_keeps_pullback_distances():
    fam = A.SingularFamily()
    st = A.tangent_structure(fam.limit(), mesh(0.04))
    seq = fam.sequence((0.4, 0.2, 0.1))
    norm = A.normalize_blowup(seq, st)
    for a, b in zip(A.pullback_matrix(seq, PTS)["matrices"], A.pullback_matrix(norm, PTS)["matrices"]):
        assert np.max(np.abs(a - b)) <= 1e-10


def test_comb_suprema_decrease():
    fam = A.SingularFamily()
    st = A.tangent_structure(fam.limit(), mesh(0.04))
    rep = A.comb_construction(A.normalize_blowup(fam.sequence((0.4, 0.2, 0.1, 0.05)), st), st)
    assert all(rep.decreasing().values())


def test_turning_radius_reaches_the_spread():
    from wpharmonic.model_space import profile_phi
    rs = A.symmetric_turning_radius(10.0)
    assert float(profile_phi(rs, 1.0)) == pytest.approx(10.0, rel=1e-10)
    # close to the asymptotic relation phi_inf = C* / rho0^2 for a wide spread
    assert rs * rs * 10.0 == pytest.approx(0.3734171001110933, rel=1e-3)


def test_synthetic_containment_reproduces_the_obstruction():
    rep = A.containment_experiment(A.SingularFamily(), 1.0, h=0.02, k_max=2, sigma0=0.4)
    assert np.all(rep.center_distance == pytest.approx(0.5, abs=1e-12))
    assert np.all(rep.sup_distance >= 0.5)
    assert np.max(rep.center_obstruction()) <= 1e-12


def test_turning_containment_decreases():
    res = A.turning_containment(A.SingularFamily(), (0.4, 0.2, 0.1), h=0.02)
    assert res["sup_decreasing"] and res["outside_decreasing"]
    s, rs, sup, _ = res["rows"][0]
    assert sup == pytest.approx(rs / 2, rel=1e-6)


def test_epsilon_budget():
    assert A.epsilon_budget(1.0, 1.0) == pytest.approx(3 / 64)
    eps = A.epsilon_budget(2.0, 1.5)
    assert 16 / 3 * 2.0 * eps < 1 / (4 * 1.5 ** 2) * (1 + 1e-12)


def test_value_distance_matches_model_distance():
    a = A.Values(np.array([0, 0]), np.array([1.0, 0.0]), np.array([0.2, 0.0]))
    b = A.Values(np.array([0, 1]), np.array([2.0, 1.0]), np.array([1.0, 0.5]))
    d = A.value_distance(a, b)
    assert d[0] == pytest.approx(distance(ModelPoint(1.0, 0.2), ModelPoint(2.0, 1.0)))
    assert d[1] == pytest.approx(distance(P0, ModelPoint(1.0, 0.5)))
