import math

import numpy as np
import pytest

from wpharmonic.domain import (ConformalMetric, Mesh, build_disk_mesh, circle_trace, integrate_circle,
                               simplex_fraction_inside)


def test_mesh_is_deterministic_and_covers_the_disk():
    a, b = build_disk_mesh(0.1), build_disk_mesh(0.1)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.simplices, b.simplices)
    assert a.tri_vol.sum() == pytest.approx(math.pi, rel=2e-3)
    assert np.allclose(np.linalg.norm(a.vertices[a.boundary], axis=1), 1.0)


def test_lumped_mass_sums_to_area():
    m = build_disk_mesh(0.08)
    assert m.mass.sum() == pytest.approx(m.tri_vol.sum(), rel=1e-12)


@pytest.mark.parametrize("r", [0.13, 0.5, 0.77])
def test_clipped_area_is_exact(r):
    m = build_disk_mesh(0.08)
    frac = simplex_fraction_inside(m, r)
    assert np.sum(frac * m.tri_vol) == pytest.approx(math.pi * r * r, rel=1e-12)


def test_circle_integral_of_constant():
    m = build_disk_mesh(0.08)
    tr = circle_trace(m, 0.5, 256)
    assert integrate_circle(tr, np.ones(256)) == pytest.approx(math.pi, rel=1e-9)


def test_submesh_keeps_vertices_inside():
    m = build_disk_mesh(0.08)
    sub, used = m.submesh(0.5)
    assert np.all(np.linalg.norm(m.vertices[used], axis=1) <= 0.5 + 1e-12)
    assert sub.nv == used.size


def test_write_read_round_trip(tmp_path):
    m = build_disk_mesh(0.1)
    m.write(tmp_path / "m.txt", "# config-hash: x\n")
    r = Mesh.read(tmp_path / "m.txt")
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.simplices, m.simplices)
    assert np.array_equal(r.boundary, m.boundary)


def test_radial_bump_constant():
    g = ConformalMetric.radial_bump(0.1)
    assert g.c == pytest.approx(0.4)
    assert g.psi(np.array([[0.5, 0.0]]))[0] == pytest.approx(0.025)


def test_coloring_is_proper():
    m = build_disk_mesh(0.1)
    col = m.coloring()
    e = m.edges
    assert np.all(col[e[:, 0]] != col[e[:, 1]])
