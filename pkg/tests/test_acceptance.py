"""Exit criteria of the build, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts the same condition, so a failing criterion also fails the run.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from radonlab.circle.arcs import ArcParameters
from radonlab.circle.multipliers import ArcGrid, MainTermSpec, approximation_error, error_E_j, main_term_L
from radonlab.circle.region import proven_region
from radonlab.circle.weyl import ReducedFraction, weyl_decay_fit, weyl_sum, weyl_sum_crt
from radonlab.experiments import ExperimentConfig, run_experiment
from radonlab.fits import theil_sen
from radonlab.fixtures import FIXTURES
from radonlab.kernels import kj_eval, lattice_annulus, make_kernel
from radonlab.lattice_fn import LatticeFunction
from radonlab.poly_map import PCube, PolynomialMap
from radonlab.sparse import (
    MAXIMAL_CONSTANT,
    SP_CONSTANT,
    SparseCollection,
    brute_force_sparsity,
    check_maximal_sparse,
    check_prop_finite_support,
    verify_sparsity,
)
from radonlab.transform import TruncatedTransform

pytestmark = pytest.mark.acceptance

T3 = PolynomialMap.monomial_curve(3)
HALF_HILBERT = make_kernel("one_over_y")


def odd_primes(limit: int) -> list[int]:
    sieve = np.ones(limit + 1, bool)
    sieve[:2] = False
    for p in range(2, int(limit**0.5) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return [int(p) for p in np.nonzero(sieve)[0] if p > 2]


def test_c1_weyl_decay(criterion):
    t0 = time.perf_counter()
    t2 = PolynomialMap.monomial_curve(2)
    primes = odd_primes(500)
    gauss = weyl_decay_fit(t2, 500, primes)
    gauss_err = max(abs(v - q**-0.5) for q, v in gauss.table)
    cubic = weyl_decay_fit(T3, 500)
    dt = time.perf_counter() - t0
    ok = gauss_err <= 1e-10 and cubic.slope <= -1 / 3 + 0.05 and dt < 60
    detail = (f"t^2 max |S| - q^-1/2 over {len(primes)} odd primes = {gauss_err:.1e}; "
              f"t^3 slope {cubic.slope:.3f} (Theil-Sen {cubic.theil_sen_slope:.3f}, "
              f"{len(cubic.excluded_zero)} vanishing maxima excluded); {dt:.1f}s")
    assert criterion("C1", ok, detail)


def _oracle_sum(P: PolynomialMap, a: tuple[int, ...], q: int) -> complex:
    """Direct sum of e(P(r).a/q) with residues computed by Horner's rule mod q."""
    grids = np.meshgrid(*([np.arange(q, dtype=np.int64)] * P.d), indexing="ij")
    r = [g.ravel() for g in grids]
    phase = np.zeros(r[0].size, dtype=np.int64)
    for alpha, coeffs in P.terms:
        mono = np.ones_like(phase)
        for ri, e in zip(r, alpha):
            for _ in range(e):
                mono = mono * ri % q
        c = sum(int(ci) * ai for ci, ai in zip(coeffs, a)) % q
        phase = (phase + c * mono) % q
    return complex(np.exp(2j * np.pi * phase / q).mean())


def _random_map(rng: np.random.Generator, d: int) -> PolynomialMap:
    n = int(rng.integers(1, 3))
    terms = {}
    for _ in range(int(rng.integers(1, 5))):
        alpha = tuple(int(v) for v in rng.integers(0, 4, size=d))
        if sum(alpha) == 0:
            continue
        terms[alpha] = [int(v) for v in rng.integers(-10**12, 10**12, size=n)]
    terms.setdefault((1,) * d if d == 1 else (1, 0), [1] * n)
    return PolynomialMap.from_coeffs(d, n, terms)


def test_c2_crt(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, count = 0.0, 0
    while count < 200:
        d = 1 if count % 4 else 2
        P = _random_map(rng, d)
        q = int(rng.integers(2, 10**4 + 1)) if d == 1 else int(rng.integers(2, 151))
        a = tuple(int(v) for v in rng.integers(0, q, size=P.n))
        if math.gcd(q, *a) != 1:
            continue
        af = ReducedFraction(q, a)
        crt = weyl_sum_crt(P, af)
        worst = max(worst, abs(crt - _oracle_sum(P, a, q)), abs(crt - weyl_sum(P, af)))
        count += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 60
    assert criterion("C2", ok, f"200 random (P, a/q), q <= 10^4 (d=1) / 150 (d=2): max deviation {worst:.1e}; {dt:.1f}s")


def _exact_m(P: PolynomialMap, K, j: int, grid: ArcGrid) -> np.ndarray:
    pts = lattice_annulus(P.d, j)
    w = kj_eval(K, j, pts)
    keep = w != 0
    x = np.array([P.evaluate(tuple(int(t) for t in y))[0] for y in pts[keep]], dtype=np.int64)
    w = w[keep]
    out = np.empty(grid.shape, dtype=np.complex128)
    for f, (a, q) in enumerate(zip(grid.center_num[:, 0], grid.center_den)):
        rat = (x * int(a)) % int(q) / int(q)
        out[f] = np.exp(2j * np.pi * (rat[None, :] + grid.offsets[:, :1] * x[None, :])) @ w
    return out


def _rel(a: LatticeFunction, b: LatticeFunction) -> float:
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    shape = tuple(h - l for l, h in zip(lo, hi))
    A, B = a.embed(lo, shape), b.embed(lo, shape)
    return float(np.abs(A - B).max() / max(np.abs(B).max(), 1e-300))


def test_c3_identity_and_inversion(criterion):
    t0 = time.perf_counter()
    params = ArcParameters(0.6, 0.45, "exploratory", 4)
    ident = 0.0
    active = 0
    for j in range(4, 9):
        w = params.widths(T3, j)[0]
        grid = ArcGrid.windows(1, 8, 6 * w, w / 5)
        res = error_E_j(T3, HALF_HILBERT, params, j, grid)
        L = main_term_L(T3, HALF_HILBERT, params, j, MainTermSpec.Lj(), grid)
        ident = max(ident, float(np.abs(_exact_m(T3, HALF_HILBERT, j, grid) - (L + res.E)).max()))
        active += res.active_count
    rng = np.random.default_rng(3)
    inv = 0.0
    for _ in range(100):
        j_lo = int(rng.integers(0, 4))
        j_hi = int(rng.integers(j_lo, 7))
        T = TruncatedTransform.from_kernel(T3, HALF_HILBERT, (j_lo, j_hi))
        size = int(rng.integers(1, 400))
        f = LatticeFunction((int(rng.integers(-300, 300)),), rng.normal(size=size) + 1j * rng.normal(size=size))
        inv = max(inv, _rel(T.apply(f, "fft"), T.apply(f, "direct")))
    dt = time.perf_counter() - t0
    ok = ident <= 1e-12 and active > 0 and inv <= 1e-9 and dt < 120
    detail = (f"max |m - (L + E)| = {ident:.1e} over j=4..8 ({active} active arc nodes); "
              f"space vs frequency relative gap {inv:.1e} on 100 instances; {dt:.1f}s")
    assert criterion("C3", ok, detail)


def test_c4_major_arc_approximation(criterion):
    t0 = time.perf_counter()
    params = ArcParameters(0.3, 0.02, "exploratory")
    js, devs = list(range(6, 15)), []
    for j in js:
        w = params.widths(T3, j)[0]
        rep = approximation_error(T3, HALF_HILBERT, params, j, ReducedFraction.of(0, 1), np.linspace(-w, w, 65))
        devs.append(rep.max_error)
    slope = theil_sen(np.array(js, float), np.log2(devs))[0]
    target = -params.epsilon + 0.1
    dt = time.perf_counter() - t0
    ok = slope <= target and dt < 300
    detail = (f"Theil-Sen slope {slope:.2f} <= {target:.2f}; deviation {devs[0]:.1e} at j=6, "
              f"{devs[-1]:.1e} at j=14; {dt:.1f}s")
    assert criterion("C4", ok, detail)


def test_c5_minor_arc_trend(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "kind": "error-decay", "map": "t3", "regime": "exploratory", "delta": 0.6, "delta_prime": 0.45,
        "chi_exponent": 4, "j_min": 6, "j_max": 14, "bootstrap": 200,
        "grid": {"half_width": 8, "step": 0.125, "q_window": 64},
    })
    res = run_experiment(cfg)
    out = res.summary["result"]
    slope = out["theil_sen_slope"]
    region = out["region"]
    dt = time.perf_counter() - t0
    ok = (not res.partial and slope is not None and slope < 0 and region is not None
          and region["in_Omega_m"] and dt < 300)
    sups = [r[1] for r in res.rows]
    detail = (f"Theil-Sen slope {slope:.3f} (eps' = {out['eps_prime']:.3f}, fed to the region test: "
              f"in_Omega_m={region['in_Omega_m'] if region else None}, boundary {region['boundary'] if region else None}); "
              f"sup |E_j| {sups[0]:.3f} -> {sups[-1]:.3f}; {dt:.1f}s")
    assert criterion("C5", ok, detail)


def test_c6_sparse_stability(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "kind": "sparse-constant", "map": "t3", "kernel": "one_over_y", "j_min": 0, "j_max": 6,
        "trials": 100, "seed": 0, "r": 2, "s": 2, "sigma": "1/2", "grid": {"support_half_width": 512},
    })
    res = run_experiment(cfg)
    out = res.summary["result"]
    dt = time.perf_counter() - t0
    ok = out["all_finite"] and out["all_certified"] and out["max_over_median"] <= 5 and dt < 600
    detail = (f"max/median {out['max_over_median']:.2f} (max {out['max']:.3f}, median {out['median']:.3f}), "
              f"all finite={out['all_finite']}, all certified={out['all_certified']}, seed 0; {dt:.1f}s")
    assert criterion("C6", ok, detail)


def test_c7_propositions(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)

    def nonneg(n=129):
        return LatticeFunction((-(n // 2),), np.abs(rng.normal(size=n)) * (rng.random(n) < 0.2))

    mx = check_maximal_sparse([(nonneg(), nonneg()) for _ in range(100)], (3,))
    d0 = LatticeFunction((0,), np.ones(1))
    mx_delta = check_maximal_sparse([(d0, d0)], (3,))
    cases = [
        (PCube.centered((0,), 1, (1,)), LatticeFunction((0,), np.ones(1)), 1, 1),
        (PCube.centered((0,), 5, (1,)), LatticeFunction((-2,), np.full(5, 0.2)), 2, 2),
        (PCube.centered((0,), 3, (2,)), LatticeFunction((-4,), rng.normal(size=9)), 1, 1),
        (PCube.centered((0,), 3, (2,)), LatticeFunction((-4,), rng.normal(size=9)), 2, 2),
        (PCube.centered((0,), 3, (2,)), LatticeFunction((-4,), rng.normal(size=9)), 1.5, 1.5),
    ]
    prop = []
    for Q, K, r, s in cases:
        trials = [(LatticeFunction((-20,), rng.normal(size=41) * (rng.random(41) < 0.3)),
                   LatticeFunction((-20,), rng.normal(size=41))) for _ in range(20)]
        prop.append(check_prop_finite_support(K, Q, r, s, trials))
    dt = time.perf_counter() - t0
    worst_prop = max(c.max_ratio for c in prop)
    ok = (mx.passes and mx.max_over_median <= 5 and mx_delta.passes and all(c.passes for c in prop) and dt < 300)
    detail = (f"maximal: max ratio {mx.max_ratio:.2f} <= {MAXIMAL_CONSTANT:g}, max/median {mx.max_over_median:.2f}; "
              f"finite support: max lhs/rhs {worst_prop:.2f} <= {SP_CONSTANT:g} over {len(cases)} batches; "
              f"all certified={mx.all_certified and all(c.all_certified for c in prop)}; {dt:.1f}s")
    assert criterion("C7", ok, detail)


def _clustered_collection(rng: np.random.Generator) -> SparseCollection:
    n = 1 + int(rng.integers(0, 2))
    degs = (1,) if n == 1 else (1, 2)
    cubes, vol = [], 0
    for _ in range(int(rng.integers(2, 9))):
        Q = PCube.dyadic(tuple(int(v) for v in rng.integers(-4, 4, size=n)), int(rng.integers(0, 4 if n == 1 else 3)),
                         degs)
        if vol + Q.cardinality > 500:
            break
        cubes.append(Q)
        vol += Q.cardinality
    return SparseCollection(cubes)


def test_c8_verifier_soundness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    sigmas = [Fraction(1, 2), Fraction(2, 3), Fraction(3, 4), Fraction(1)]
    disagree, certified = 0, 0
    for i in range(50):
        S = _clustered_collection(rng)
        sigma = sigmas[i % len(sigmas)]
        v = verify_sparsity(S, sigma)
        truth = brute_force_sparsity(S, sigma)
        disagree += int(v.certified != truth or not v.exact)
        certified += int(truth)
    dt = time.perf_counter() - t0
    ok = disagree == 0
    assert criterion("C8", ok, f"{disagree} disagreements on 50 collections "
                               f"({certified} sparse, {50 - certified} not); {dt:.1f}s")


def test_c9_region_arithmetic(criterion):
    eps_values = [Fraction(1, 10**9), Fraction(6, 100), Fraction(1, 3), Fraction(1)]
    bad = []
    for name, fx in FIXTURES.items():
        P = fx.P
        for eps in eps_values:
            center = proven_region(P, eps, 2, 2)
            b = center.boundary
            if b != Fraction(1, 2) + eps / (2 * center.N_P):
                bad.append((name, eps, "boundary"))
            if not (center.in_Omega_m and center.major_condition_ok):
                bad.append((name, eps, "center"))
            for ir, is_ in [(b, Fraction(1, 2)), (Fraction(1, 2), b), (b, b)]:
                if proven_region(P, eps, inv_r=ir, inv_s=is_).in_Omega_m:
                    bad.append((name, eps, "boundary inside"))
            if not proven_region(P, eps, inv_r=b - Fraction(1, 10**30), inv_s=Fraction(1, 2)).in_Omega_m:
                bad.append((name, eps, "just inside"))
    ok = not bad
    assert criterion("C9", ok, f"{len(FIXTURES)} fixtures x {len(eps_values)} eps' values, "
                               f"{len(bad)} violations; exact rationals")
