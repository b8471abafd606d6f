import math

import numpy as np
import pytest

from conftest import mesh, omega, solved
from wpharmonic.model_space import ConvexRegion
from wpharmonic.solver import (DiscreteMap, Schedule, approximating_harmonic, boundary_map, discrete_energy,
                               el_residual_summary, pointwise_distance, product_energy, solve_constrained,
                               solve_dirichlet)

WIND = (lambda t: 0.6 - 0.4 * np.cos(t), lambda t: 10 * np.sin(t))


def test_line_fixture_matches_linear_extension():
    u, rep = solved("line", 0.04)
    x = u.mesh.vertices[:, 0]
    assert rep.converged
    assert np.max(np.abs(u.rho - (2 + x))) <= 1e-2
    assert np.all(u.phi == 0)
    assert discrete_energy(u) == pytest.approx(math.pi, rel=0.02)


def test_conformal_factor_does_not_change_the_solution():
    # in two dimensions the energy is conformally invariant
    a, _ = solved("line", 0.04)
    b, _ = solved("line_conf", 0.04)
    assert np.max(np.abs(a.rho - b.rho)) <= 1e-10


def test_constant_boundary_gives_zero_energy():
    m = mesh(0.08)
    b = boundary_map(m, lambda t: 0 * t + 1.5, lambda t: 0 * t + 0.3)
    u, rep = solve_dirichlet(m, b)
    assert rep.energy == 0.0 and discrete_energy(u) == 0.0
    assert np.all(u.rho == 1.5)


def test_winding_solution_stays_away_from_basepoint():
    u, rep = solved("winding", 0.08)
    assert rep.converged and rep.monotone
    assert u.rho[~u.frozen].min() > 0.19
    assert el_residual_summary(u)["rms"] < 0.05


def test_energy_history_never_increases():
    _, rep = solved("winding", 0.08)
    h = np.array(rep.energy_history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])


def test_sequential_and_colored_agree():
    a, ra = solved("winding", 0.08, "sequential")
    b, rb = solved("winding", 0.08, "colored")
    assert np.max(pointwise_distance(a, b)) <= 1e-5
    assert ra.energy == pytest.approx(rb.energy, rel=1e-9)
    assert rb.iterations < ra.iterations


def test_compiled_and_vectorized_engines_agree():
    m = mesh(0.16)
    b = boundary_map(m, *WIND)
    a, _ = solve_dirichlet(m, b)
    v, _ = solve_dirichlet(m, b, Schedule(engine="vectorized"))
    assert np.max(pointwise_distance(a, v)) <= 1e-8


def test_constrained_solution_stays_in_region():
    h = 0.08
    m = mesh(h)
    reg = ConvexRegion(0.5)
    u, rep = solve_constrained(m, boundary_map(m, *WIND), reg, Schedule(mode="colored", omega=omega(h)))
    assert rep.converged and rep.notes["image_in_region"]


def test_inactive_constraint_changes_nothing():
    h = 0.08
    free, _ = solved("winding", h)
    reg = ConvexRegion(0.05)
    assert np.all(reg.contains_arrays(free.rho, free.phi))
    u, rep = solve_constrained(free.mesh, boundary_map(free.mesh, *WIND), reg,
                               Schedule(mode="colored", omega=omega(h)))
    assert np.max(pointwise_distance(u, free)) <= 1e-5
    assert rep.energy == pytest.approx(discrete_energy(free), rel=1e-8)


def test_approximating_harmonic_of_harmonic_map_is_itself():
    u, _ = solved("winding", 0.08)
    w, rep, sup, used = approximating_harmonic(u, 0.5, Schedule(mode="colored", omega=omega(0.08)))
    assert rep.converged and sup <= 1e-4
    assert np.all(np.linalg.norm(u.mesh.vertices[used], axis=1) <= 0.5 + 1e-12)


def test_product_factors_decouple():
    m = mesh(0.08)
    b = boundary_map(m, lambda t: 2 + np.cos(t), lambda t: 0 * t)
    th = np.arctan2(m.vertices[:, 1], m.vertices[:, 0])
    reg = np.zeros((m.nv, 2))
    reg[m.boundary] = np.stack([np.cos(th), np.sin(th)], 1)[m.boundary]
    u, rep = solve_dirichlet(m, DiscreteMap(m, b.rho[:, None], b.phi[:, None], "product", regular=reg))
    single, _ = solve_dirichlet(m, b)
    assert rep.converged and (u.j, u.m) == (1, 1)
    assert np.allclose(u.regular, m.vertices, atol=1e-10)
    assert product_energy(u) == pytest.approx(discrete_energy(single) + 2 * discrete_energy(single), rel=1e-9)


def test_map_file_round_trip(tmp_path):
    u, _ = solved("winding", 0.08)
    u.write(tmp_path / "u.map", "# config-hash: x\n")
    v = DiscreteMap.read(tmp_path / "u.map", u.mesh)
    assert np.array_equal(v.rho, u.rho) and np.array_equal(v.phi, u.phi)
