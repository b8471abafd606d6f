import cmath
import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpharmonic.boundary_coords import (MultivaluedWarning, PlumbingParam, ProductPoint, model_to_plumbing,
                                        plumbing_to_model, product_distance, product_distance_arrays)
from wpharmonic.model_space import P0, ModelPoint, distance


def test_plumbing_examples():
    p = plumbing_to_model(math.exp(-4))
    assert (p.rho, p.phi) == (pytest.approx(1.0, abs=1e-15), 0.0)
    q = plumbing_to_model(cmath.exp(-4 + 1j * math.pi))
    assert q.rho == pytest.approx(1.0, abs=1e-15) and q.phi == pytest.approx(math.pi / 8, abs=1e-15)
    assert plumbing_to_model(0).is_basepoint


def test_plumbing_domain():
    with pytest.raises(ValueError):
        plumbing_to_model(1.0)
    with pytest.raises(ValueError):
        PlumbingParam(2j)


def test_inverse_examples():
    assert model_to_plumbing(ModelPoint(1.0, 0.0)).t == pytest.approx(math.exp(-4), abs=1e-17)
    assert model_to_plumbing(P0).t == 0
    mods = [abs(model_to_plumbing(ModelPoint(r, 0.2)).t) for r in (0.5, 0.2, 0.1)]
    assert mods[0] > mods[1] > mods[2]


@settings(max_examples=300, deadline=None)
# below rho ~ 0.075 the modulus exp(-4/rho^2) underflows to zero
@given(st.floats(0.08, 20.0), st.floats(-math.pi / 8 + 1e-9, math.pi / 8))
def test_round_trip(rho, phi):
    p = plumbing_to_model(model_to_plumbing(ModelPoint(rho, phi)))
    assert abs(p.rho - rho) <= 1e-12 * max(1, rho) and abs(p.phi - phi) <= 1e-12


def test_branch_overflow_warns_and_keeps_the_lift():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        t = model_to_plumbing(ModelPoint(0.7, 1.0))
    assert any(issubclass(x.category, MultivaluedWarning) for x in w)
    assert t.lift == 1
    assert plumbing_to_model(t).phi == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 0.999), st.floats(1e-6, 0.999))
def test_rho_monotone_in_modulus(a, b):
    ra, rb = plumbing_to_model(a).rho, plumbing_to_model(b).rho
    assert (a < b) == (ra < rb) or a == b


def test_product_examples():
    a = ProductPoint([0, 0], [ModelPoint(1.0, 0.2)])
    b = ProductPoint([3, 4], [ModelPoint(1.0, 0.2)])
    assert product_distance(a, a) == 0
    assert product_distance(a, b) == pytest.approx(5.0)
    c = ProductPoint([], [ModelPoint(1.0, 0.0), P0])
    d = ProductPoint([], [ModelPoint(2.0, 0.0), ModelPoint(1.0, 3.0)])
    assert product_distance(c, d) == pytest.approx(math.sqrt(2))


def test_product_shape_mismatch():
    with pytest.raises(ValueError):
        product_distance(ProductPoint([0, 0], []), ProductPoint([], []))
    with pytest.raises(ValueError):
        ProductPoint([1.0], [])


def test_serialization_round_trip():
    p = ProductPoint([0.5, -1.25], [ModelPoint(1.0, 0.2), P0])
    text = p.serialize()
    assert text == "R: 0.5 -1.25 | S: (1.0 0.2) (P0)"
    q = ProductPoint.parse(text, shape=(1, 2))
    assert product_distance(p, q) == 0.0
    with pytest.raises(ValueError):
        ProductPoint.parse(text, shape=(1, 1))


comp = st.tuples(st.floats(0.1, 3.0), st.floats(-2.0, 2.0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), comp,
       st.lists(st.floats(-3, 3), min_size=2, max_size=2), comp,
       st.lists(st.floats(-3, 3), min_size=2, max_size=2), comp)
def test_product_triangle_and_factor_restriction(r1, c1, r2, c2, r3, c3):
    p, q, s = (ProductPoint(r, [ModelPoint(*c)]) for r, c in ((r1, c1), (r2, c2), (r3, c3)))
    assert product_distance(p, s) <= product_distance(p, q) + product_distance(q, s) + 1e-9
    same = ProductPoint(r1, [ModelPoint(*c2)])
    assert product_distance(ProductPoint(r1, [ModelPoint(*c1)]), same) == \
        pytest.approx(distance(ModelPoint(*c1), ModelPoint(*c2)), rel=1e-12, abs=1e-15)


def test_vectorized_matches_scalar():
    d = product_distance_arrays([[3.0, 4.0]], [[1.0]], [[0.2]], [[0.0, 0.0]], [[1.0]], [[0.2]])
    assert d[0] == pytest.approx(5.0)
