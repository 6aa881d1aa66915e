"""Complete exponential sums S(a/q) and rational shells."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from itertools import product
from typing import Iterator, Sequence

import numpy as np
import scipy.fft as sfft

from ..poly_map import PolynomialMap, check_condition_C
from ..threads import fft_workers


@dataclass(frozen=True, order=True)
class ReducedFraction:
    """a/q in [0,1)^n with gcd(a_1, ..., a_n, q) = 1."""

    q: int
    a: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError("denominator must be positive")
        if any(not 0 <= v < self.q for v in self.a):
            raise ValueError(f"numerators {self.a} must lie in [0, {self.q})")
        if math.gcd(self.q, *self.a) != 1:
            raise ValueError(f"{self.a}/{self.q} is not reduced")

    @classmethod
    def of(cls, a: Sequence[int] | int, q: int) -> ReducedFraction:
        a = (a,) if isinstance(a, (int, np.integer)) else tuple(a)
        return cls(int(q), tuple(int(v) % int(q) for v in a))

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def shell(self) -> int:
        """k with 2^(k-1) <= q < 2^k."""
        return self.q.bit_length()

    def as_float(self) -> np.ndarray:
        return np.asarray(self.a, dtype=np.float64) / self.q


def _phases_mod_q(P: PolynomialMap, a: Sequence[int], q: int) -> np.ndarray:
    """P(r) . a mod q for all r in [q]^d, flattened in C order."""
    terms = []
    for alpha, c in P.terms:
        coef = sum(ci * ai for ci, ai in zip(c, a)) % q
        if coef:
            terms.append((alpha, coef))
    if q < 2**31:
        r = np.arange(q, dtype=np.int64)
        grids = np.meshgrid(*([r] * P.d), indexing="ij") if P.d > 1 else [r]
        grids = [g.ravel() for g in grids]
        acc = np.zeros(q**P.d, dtype=np.int64)
        for alpha, coef in terms:
            mono = np.full(acc.shape, coef, dtype=np.int64)
            for g, e in zip(grids, alpha):
                for _ in range(e):
                    mono = (mono * g) % q
            acc = (acc + mono) % q
        return acc
    # products of residues no longer fit in int64: exact Python integers
    out = []
    for pt in product(range(q), repeat=P.d):
        v = 0
        for alpha, coef in terms:
            v += coef * math.prod(pow(t, e, q) for t, e in zip(pt, alpha))
        out.append(v % q)
    return np.array(out, dtype=object)


def _root_sum(counts: np.ndarray, q: int) -> complex:
    h = np.nonzero(counts)[0]
    c = counts[h].astype(np.float64)
    ang = 2.0 * np.pi * h / q
    return complex(math.fsum(c * np.cos(ang)), math.fsum(c * np.sin(ang)))


def weyl_sum(P: PolynomialMap, af: ReducedFraction | tuple, q: int | None = None) -> complex:
    """S(a/q) = q^-d sum_{r in [q]^d} e(P(r) . a / q), by direct summation."""
    if not isinstance(af, ReducedFraction):
        af = ReducedFraction.of(af, q)
    if af.n != P.n:
        raise ValueError("fraction dimension does not match P")
    if af.q == 1:
        return 1.0 + 0j
    ph = _phases_mod_q(P, af.a, af.q)
    if ph.dtype == object:
        counts = np.zeros(af.q, dtype=np.int64)
        for v in ph:
            counts[int(v)] += 1
    else:
        counts = np.bincount(ph, minlength=af.q)
    return _root_sum(counts, af.q) / af.q**P.d


def factorize(q: int) -> list[tuple[int, int]]:
    out, p = [], 2
    while p * p <= q:
        if q % p == 0:
            e = 0
            while q % p == 0:
                q //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if q > 1:
        out.append((q, 1))
    return out


def crt_split(af: ReducedFraction) -> list[ReducedFraction]:
    """Write a/q = sum_i b_i/q_i over the prime-power factors q_i of q."""
    parts = []
    for p, e in factorize(af.q):
        qi = p**e
        mi = af.q // qi
        inv = pow(mi, -1, qi)
        parts.append(ReducedFraction(qi, tuple(v * inv % qi for v in af.a)))
    return parts


def weyl_sum_crt(P: PolynomialMap, af: ReducedFraction) -> complex:
    """S(a/q) as the product of the prime-power factor sums."""
    if af.q == 1:
        return 1.0 + 0j
    return reduce(lambda x, y: x * y, (weyl_sum(P, part) for part in crt_split(af)), 1.0 + 0j)


def weyl_sums_for_q(P: PolynomialMap, q: int) -> np.ndarray:
    """Array S[a] = S(a/q) over all a in (Z/q)^n (reduced or not)."""
    n = P.n
    counts = np.zeros((q,) * n, dtype=np.float64)
    comps = []
    for i in range(n):
        e = [0] * n
        e[i] = 1
        comps.append(_phases_mod_q(P, e, q).astype(np.int64))
    np.add.at(counts, tuple(comps), 1.0)
    return sfft.ifftn(counts, workers=fft_workers()) * q**n / q**P.d


def reduced_mask(n: int, q: int) -> np.ndarray:
    idx = np.indices((q,) * n).reshape(n, -1)
    g = np.full(idx.shape[1], q)
    for row in idx:
        g = np.gcd(g, row)
    return (g == 1).reshape((q,) * n)


def enumerate_shell(n: int, k: int, q_cap: int | None = None) -> Iterator[ReducedFraction]:
    """Reduced a/q with 2^(k-1) <= q < 2^k (and q <= q_cap); q ascending, a lexicographic."""
    if k < 1:
        raise ValueError("shell index k must be >= 1")
    hi = 2**k - 1 if q_cap is None else min(2**k - 1, q_cap)
    for q in range(2 ** (k - 1), hi + 1):
        for a in product(range(q), repeat=n):
            if math.gcd(q, *a) == 1:
                yield ReducedFraction(q, a)


def enumerate_fractions(n: int, q_max: int) -> Iterator[ReducedFraction]:
    for q in range(1, q_max + 1):
        for a in product(range(q), repeat=n):
            if math.gcd(q, *a) == 1:
                yield ReducedFraction(q, a)


@dataclass
class WeylDecayFit:
    slope: float
    intercept: float
    theil_sen_slope: float
    table: list[tuple[int, float]]
    excluded_zero: list[int]
    d_star: int

    @property
    def predicted_slope(self) -> float:
        return -1.0 / self.d_star


def max_weyl_modulus(P: PolynomialMap, q: int) -> float:
    if q == 1:
        return 1.0
    S = np.abs(weyl_sums_for_q(P, q))
    vals = S[reduced_mask(P.n, q)]
    m = float(vals.max())
    return 0.0 if m < 1e-12 else m


def weyl_decay_fit(P: PolynomialMap, q_max: int, q_values: Sequence[int] | None = None) -> WeylDecayFit:
    """Per-q maxima of |S(a/q)| over reduced a and a log2-log2 slope fit.

    q with vanishing maxima cannot enter a log fit; they are listed in
    ``excluded_zero`` instead.
    """
    from ..fits import least_squares, theil_sen

    if not check_condition_C(P):
        raise ValueError("Weyl decay needs Condition (C); this map fails it")
    qs = list(q_values) if q_values is not None else list(range(1, q_max + 1))
    if not qs or min(qs) < 1:
        raise ValueError("need at least one q >= 1")
    table = [(q, max_weyl_modulus(P, q)) for q in qs]
    pts = [(q, v) for q, v in table if v > 0]
    zeros = [q for q, v in table if v == 0]
    x = np.log2([q for q, _ in pts])
    y = np.log2([v for _, v in pts])
    slope, icpt = least_squares(x, y)
    ts = theil_sen(x, y)[0] if len(pts) > 1 else float("nan")
    return WeylDecayFit(slope, icpt, ts, table, zeros, P.d_star)
