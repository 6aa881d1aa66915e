from __future__ import annotations

import math
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radonlab.fixtures import get_map
from radonlab.kernels import make_kernel
from radonlab.lattice_fn import LatticeFunction, pair
from radonlab.poly_map import PolynomialMap
from radonlab.transform import BudgetExceeded, TruncatedTransform, estimate_operator_norm, maximal


def test_one_term_example(t3):
    K = make_kernel("one_over_y")
    pts = np.array([1, 2, -1, -2])
    T = TruncatedTransform.from_weights(t3, pts, K(pts.astype(float)))
    out = T.apply(LatticeFunction.delta((0,)))
    assert out((1,)) == pytest.approx(-0.5)
    assert out((-1,)) == pytest.approx(0.5)
    assert out((8,)) == pytest.approx(-0.25)


def test_zero_maps_to_zero(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (0, 4))
    out = T.apply(LatticeFunction.zeros((-5,), (11,)))
    assert np.all(out.values == 0)


def test_scale_range_is_sum_of_single_scales(t3, half_hilbert):
    rng = np.random.default_rng(0)
    f = LatticeFunction((-20,), rng.normal(size=41))
    whole = TruncatedTransform.from_kernel(t3, half_hilbert, (1, 5)).apply(f)
    parts = [TruncatedTransform.from_kernel(t3, half_hilbert, (j, j)).apply(f) for j in range(1, 6)]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    assert whole.allclose(total, atol=1e-13)


def test_annulus_table_contents(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (3, 3))
    y = T.tables[0].points[:, 0]
    assert np.all((np.abs(y) > 4) & (np.abs(y) < 16))
    assert set(np.abs(y)) == set(range(5, 16))


def _rel(a: LatticeFunction, b: LatticeFunction) -> float:
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    shape = tuple(h - l for l, h in zip(lo, hi))
    A, B = a.embed(lo, shape), b.embed(lo, shape)
    return float(np.abs(A - B).max() / max(np.abs(B).max(), 1e-300))


@pytest.mark.parametrize("name", ["t3", "curve_2", "t3_plus_t"])
def test_direct_equals_frequency_path(name, half_hilbert):
    P = get_map(name)
    T = TruncatedTransform.from_kernel(P, half_hilbert, (1, 4))
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(100):
        size = (int(rng.integers(1, 60)),) * P.n if P.n == 1 else (int(rng.integers(1, 12)), int(rng.integers(1, 12)))
        f = LatticeFunction(tuple(rng.integers(-50, 50, P.n)), rng.normal(size=size) + 1j * rng.normal(size=size))
        assert _rel(T.apply(f, "fft"), T.apply(f, "direct")) <= 1e-9


def test_direct_equals_frequency_path_large_box(t3, half_hilbert):
    rng = np.random.default_rng(5)
    f = LatticeFunction((-1024,), rng.normal(size=2049))
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (1, 6))
    assert _rel(T.apply(f, "fft"), T.apply(f, "direct")) <= 1e-9


def test_two_dimensional_domain():
    P = get_map("iw_d2_D1")
    T = TruncatedTransform.from_kernel(P, make_kernel("riesz_component", 0, 2), (1, 3))
    rng = np.random.default_rng(2)
    f = LatticeFunction((0, 0), rng.normal(size=(7, 5)))
    assert _rel(T.apply(f, "fft"), T.apply(f, "direct")) <= 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    P = PolynomialMap.monomial_curve(3)
    T = TruncatedTransform.from_kernel(P, make_kernel("one_over_y"), (0, 3))
    rng = np.random.default_rng(seed)
    f = LatticeFunction((-4,), rng.normal(size=9))
    g = LatticeFunction((-4,), rng.normal(size=9))
    lhs = T.apply(f * a + g * b)
    rhs = T.apply(f) * a + T.apply(g) * b
    assert lhs.allclose(rhs, atol=1e-12)


def test_translation_equivariance(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (0, 4))
    rng = np.random.default_rng(1)
    f = LatticeFunction((0,), rng.normal(size=15))
    assert T.apply(f.shifted((17,))).allclose(T.apply(f).shifted((17,)), atol=0)


def test_bilinear_matches_pairing(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (0, 5))
    rng = np.random.default_rng(4)
    f = LatticeFunction((-30,), rng.normal(size=61) + 1j * rng.normal(size=61))
    g = LatticeFunction((-10,), rng.normal(size=80))
    assert np.isclose(T.bilinear(f, g), pair(T.apply(f), g), rtol=1e-12)


def test_space_kernel_and_matrix_agree(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (0, 2))
    k = T.space_kernel()
    f = LatticeFunction.delta((0,))
    assert T.apply(f).allclose(k, atol=1e-15)
    A = T.as_matrix((-10,), (21,))
    rng = np.random.default_rng(0)
    v = rng.normal(size=21)
    out = T.apply(LatticeFunction((-10,), v)).embed((-10,), (21,))
    assert np.allclose(A @ v, out)


def test_multiplier_samples_match_direct_evaluation(t3, half_hilbert):
    T = TruncatedTransform.from_kernel(t3, half_hilbert, (0, 3))
    xi = np.linspace(0, 1, 17)
    m = T.multiplier(4096)
    assert np.allclose(m.evaluate(xi), T.multiplier_at(xi))


def test_budget():
    with pytest.raises(BudgetExceeded):
        TruncatedTransform.from_kernel(get_map("iw_d2_D1"), make_kernel("riesz_component", 0, 2), (0, 12), budget=10_000)


def test_maximal_delta_lower_bound():
    f = LatticeFunction.delta((0,))
    M = maximal((1,), f, [2**l for l in range(8)])
    for x in range(-100, 101):
        assert M((x,)).real >= 1 / (2 * abs(x) + 1) - 1e-15


def test_maximal_brute_force():
    rng = np.random.default_rng(3)
    f = LatticeFunction((0, 0), rng.normal(size=(5, 9)))
    degs, ells = (1, 2), [1, 2]
    M = maximal(degs, f, ells)
    a = np.abs(f.values)
    for x in [(0, 0), (2, 4), (4, 8), (-1, 3), (5, 12)]:
        best = 0.0
        for ell in ells:
            s = [ell**D for D in degs]
            for o0 in range(s[0]):
                for o1 in range(s[1]):
                    tot = 0.0
                    for y0 in range(-o0, s[0] - o0):
                        for y1 in range(-o1, s[1] - o1):
                            p = (x[0] - y0, x[1] - y1)
                            if 0 <= p[0] < 5 and 0 <= p[1] < 9:
                                tot += a[p]
                    best = max(best, tot / (s[0] * s[1]))
        assert M(x).real == pytest.approx(best, abs=1e-12)


def test_maximal_constant_and_monotone():
    f = LatticeFunction((0,), np.full(200, 3.0))
    M = maximal((2,), f, [1, 2, 4])
    assert np.allclose(M.values[40 : 200 - 40], 3.0)
    rng = np.random.default_rng(7)
    g = LatticeFunction((0,), rng.normal(size=64))
    small = maximal((1,), g, [1, 2])
    big = maximal((1,), g, [1, 2, 4, 8])
    lo, shape = big.lo, big.shape
    assert np.all(big.values.real >= small.embed(lo, shape).real - 1e-15)


@given(st.integers(0, 2**32 - 1))
def test_maximal_sublinear_and_bounded(seed):
    rng = np.random.default_rng(seed)
    f = LatticeFunction((0,), rng.normal(size=20))
    g = LatticeFunction((0,), rng.normal(size=20))
    ells = [1, 2, 4]
    Mf, Mg, Ms = maximal((1,), f, ells), maximal((1,), g, ells), maximal((1,), f + g, ells)
    assert np.all(Ms.values.real <= Mf.values.real + Mg.values.real + 1e-12)
    assert Mf.values.real.max() <= np.abs(f.values).max() + 1e-12


def test_norm_identity():
    ident = lambda f: f  # noqa: E731
    assert estimate_operator_norm(ident, (0,), (16,), 2, 2).value == pytest.approx(1.0)
    assert estimate_operator_norm(ident, (0,), (8,), 3, 1.5).value >= 1 - 1e-9


def test_norm_young_ceiling():
    w = np.array([0.2, 0.5, 0.3])
    T = TruncatedTransform.from_weights(PolynomialMap.monomial_curve(1), [1, 2, 3], w)
    est = estimate_operator_norm(T.apply, (0,), (40,), 1, math.inf)
    assert est.value <= w.max() + 1e-15
    assert est.is_lower_bound


def test_norm_single_scale_average_matches_svd(t3):
    A = TruncatedTransform.single_scale_average(t3, 4)
    est = estimate_operator_norm(A.apply, (-512,), (1024,), 2, 2)
    assert est.svd_value is not None
    assert abs(est.value - est.svd_value) <= 1e-6


def test_norm_generic_exponents_bounded_by_exact_endpoints(t3):
    A = TruncatedTransform.single_scale_average(t3, 2)
    box = ((-20,), (41,))
    mid = estimate_operator_norm(A.apply, *box, 1.5, 3.0, restarts=4)
    assert 0 < mid.value <= 1 + 1e-12
