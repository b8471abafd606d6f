import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpharmonic.glued_space import (BASE_SHEET, BASEPOINT, GluedPoint, SheetRegistry, distance_A,
                                    distances_A, glued_geodesic, interpolate_A,
                                    npc_quadrilateral_check, random_glued)
from wpharmonic.model_space import ModelPoint, distance

pt = st.tuples(st.integers(0, 2), st.floats(0.05, 3.0), st.floats(-4.0, 4.0))


def test_same_sheet_is_model_distance():
    a, b = ModelPoint(0.5, 0.2), ModelPoint(1.2, -0.7)
    assert distance_A(GluedPoint(1, a), GluedPoint(1, b)) == pytest.approx(distance(a, b), rel=1e-12)


def test_cross_sheet_goes_through_basepoint():
    x, y = GluedPoint(0, ModelPoint(0.5, 0.2)), GluedPoint(2, ModelPoint(1.25, 0.2))
    assert distance_A(x, y) == 0.5 + 1.25
    g = glued_geodesic(x, y)
    assert g.crosses_basepoint and g.length == 1.75


def test_basepoint_has_no_sheet():
    assert BASEPOINT.sheet == BASE_SHEET
    with pytest.raises(ValueError):
        GluedPoint(-1, ModelPoint(1.0, 0.0))


def test_registry_rejects_bad_partition():
    with pytest.raises(ValueError):
        SheetRegistry((0, 1, 2), ((0, 1),))
    reg = SheetRegistry((0, 1))
    with pytest.raises(KeyError):
        reg.point(5, 1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(pt, pt, pt, st.floats(0.0, 1.0))
def test_npc_inequality(z, x, y, lam):
    arr = [tuple(np.array([c]) for c in p) for p in (z, x, y)]
    rep = npc_quadrilateral_check(*arr, np.array([lam]))
    assert rep.max_violation <= 1e-6


def test_npc_on_random_batch():
    rng = np.random.default_rng(3)
    z, x, y = (random_glued(rng, 500, [0, 1, 2]) for _ in range(3))
    assert npc_quadrilateral_check(z, x, y, rng.random(500)).ok


@settings(max_examples=50, deadline=None)
@given(pt, pt, st.floats(0.0, 1.0))
def test_interpolation_splits_distance(x, y, lam):
    s, r, f = interpolate_A(*x, *y, lam)
    d = distances_A(*x, *y)
    assert distances_A(*x, s, r, f) == pytest.approx(lam * d, rel=1e-6, abs=1e-9)
