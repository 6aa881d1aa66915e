from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radonlab.fixtures import get_map
from radonlab.poly_map import (
    PCube,
    PolynomialMap,
    check_condition_C,
    dilate_cube,
    probe_condition_L,
    rho,
    rho_many,
)


@pytest.mark.parametrize("P, t, expected", [
    (PolynomialMap.monomial_curve(3), 2, (8,)),
    (PolynomialMap.monomial_curve(1, 2), -3, (-3, 9)),
    (PolynomialMap.monomial_curve(1, 2, 3), 2, (2, 4, 8)),
])
def test_evaluate_examples(P, t, expected):
    assert P.evaluate(t) == expected


def test_invariants_and_degrees():
    P = PolynomialMap.from_coeffs(2, 2, {(1, 0): [1, 0], (1, 1): [0, 1], (0, 3): [2, 0]})
    assert P.degrees == (3, 2)
    assert P.degree == 3
    assert P.d_star == 3
    assert P.d_star <= P.degree
    with pytest.raises(ValueError):
        PolynomialMap.from_coeffs(1, 1, {(0,): [1]})
    with pytest.raises(ValueError):
        PolynomialMap.from_coeffs(1, 2, {(1,): [1, 0]})


def test_overflow_is_reported_not_wrapped():
    P = PolynomialMap.monomial_curve(5)
    big = 10**5
    with pytest.raises(OverflowError):
        P.evaluate_many(np.array([[big]]))
    assert P.evaluate(big) == (big**5,)
    assert P.evaluate(10**20) == (10**100,)


def test_evaluate_many_matches_exact():
    P = get_map("iw_d2_D3")
    pts = np.array(list(itertools.product(range(-6, 7), repeat=2)))
    fast = P.evaluate_many(pts)
    exact = np.array([P.evaluate(tuple(p)) for p in pts])
    assert np.array_equal(fast, exact)


coeff_tables = st.dictionaries(
    st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda a: sum(a) > 0),
    st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
    min_size=1, max_size=6,
)


def _safe_map(table):
    try:
        return PolynomialMap.from_coeffs(2, 2, table)
    except ValueError:
        return None


@given(coeff_tables, coeff_tables, st.tuples(st.integers(-50, 50), st.integers(-50, 50)))
def test_evaluate_is_additive_in_coefficients(a, b, t):
    P, Q = _safe_map(a), _safe_map(b)
    if P is None or Q is None:
        return
    try:
        S = P + Q
    except ValueError:
        return  # a component cancelled completely
    assert S.evaluate(t) == tuple(x + y for x, y in zip(P.evaluate(t), Q.evaluate(t)))


@given(coeff_tables)
def test_condition_C_matches_brute_force(table):
    P = _safe_map(table)
    if P is None:
        return
    verdict = check_condition_C(P)
    for i in range(P.n):
        hits = sorted(a for a, c in P.coeffs.items()
                      if sum(a) == P.degrees[i] and c == tuple(int(k == i) for k in range(P.n)))
        assert verdict.witnesses[i] == (hits[0] if hits else None)
    assert verdict.holds == all(w is not None for w in verdict.witnesses)
    assert check_condition_C(P) == verdict


@pytest.mark.parametrize("P, holds, witnesses", [
    (PolynomialMap.monomial_curve(1, 2), True, ((1,), (2,))),
    (PolynomialMap.from_coeffs(1, 1, {(3,): [2]}), False, (None,)),
    (PolynomialMap.from_coeffs(2, 2, {(1, 0): [1, 0], (1, 1): [0, 1]}), True, ((1, 0), (1, 1))),
])
def test_condition_C_examples(P, holds, witnesses):
    v = check_condition_C(P)
    assert bool(v) is holds
    assert v.witnesses == witnesses


def test_probe_condition_L():
    assert probe_condition_L(PolynomialMap.monomial_curve(3), 3, 1, 100, 0.5).no_counterexample_found
    assert probe_condition_L(PolynomialMap.monomial_curve(1, 2), 1, 1, 100, 0.5).no_counterexample_found
    v = probe_condition_L(get_map("lojasiewicz_failure"), 1, 2, 50, 0.125)
    assert not v.no_counterexample_found
    t = np.array(v.counterexample)
    assert abs(t[0] * t[1] - 1) < 1
    assert abs(get_map("lojasiewicz_failure").evaluate_real(t[None])[0, 0]) < np.linalg.norm(t)
    with pytest.raises(ValueError):
        probe_condition_L(PolynomialMap.monomial_curve(3), 0, 1, 10, 1)
    with pytest.raises(ValueError):
        probe_condition_L(PolynomialMap.monomial_curve(3), 1, -1, 10, 1)


@pytest.mark.parametrize("degrees, x, expected", [
    ((1, 2), (-8, 9), 8.0),
    ((1, 2, 3), (0, 0, 0), 0.0),
    ((3,), (64,), 4.0),
])
def test_rho_examples(degrees, x, expected):
    assert rho(degrees, x) == expected


@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=2), st.lists(st.booleans(), min_size=2, max_size=2))
def test_rho_zero_and_sign_symmetry(x, flips):
    degs = (1, 3)
    flipped = [-v if f else v for v, f in zip(x, flips)]
    assert rho(degs, x) == rho(degs, flipped)
    assert (rho(degs, x) == 0) == (x == [0, 0])
    assert np.isclose(rho_many(degs, np.array([x]))[0], rho(degs, x))


def test_pcube_shapes_and_invariant():
    Q = PCube.centered((0, 0), 4, (1, 2))
    assert Q.shape == (5, 17)
    assert Q.center == (0.0, 0.0)
    with pytest.raises(ValueError):
        PCube((0,), (100,), 2.0, (1,))
    D = PCube.dyadic((0, 0), 2, (1, 3))
    assert D.shape == (4, 64) and D.cardinality == 256


def test_dilate_examples():
    Q = PCube.centered((0,), 5, (1,))
    Q2 = dilate_cube(Q)
    assert Q2.shape[0] >= 10 and Q2.center == Q.center
    R = dilate_cube(PCube.centered((3, -2), 4, (1, 2)))
    assert 8 <= R.sidelength < 16
    assert R.shape == (9, 65)
    assert R.center == (3.0, -2.0)
    Q0 = PCube.centered((1, 1), 2, (1, 2))
    assert dilate_cube(Q0, 3) == dilate_cube(dilate_cube(dilate_cube(Q0)))


@pytest.mark.parametrize("degrees", [(1,), (1, 2), (2, 1)])
@pytest.mark.parametrize("ell", [1, 2, 3])
def test_points_outside_double_are_far(degrees, ell):
    Q = PCube.centered((0,) * len(degrees), ell, degrees)
    Q2 = dilate_cube(Q)
    inside = Q.points()
    lo = np.asarray(Q2.lo) - 3
    hi = np.asarray(Q2.hi) + 3
    grid = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), -1).reshape(-1, len(degrees))
    outside = np.array([p for p in grid if not Q2.contains(p)])
    dist = np.min(np.linalg.norm(inside[:, None, :] - outside[None, :, :], axis=2))
    assert dist >= 0.25 * Q.sidelength


def test_json_round_trip():
    P = get_map("iw_d2_D2")
    doc = json.loads(P.to_json())
    assert set(doc) == {"d", "n", "coeffs"}
    assert PolynomialMap.from_json(P.to_json()) == P
    bad = {"d": 1, "n": 1, "coeffs": [{"alpha": [1], "c": [1.5]}]}
    with pytest.raises((TypeError, ValueError)):
        PolynomialMap.from_dict(bad)
