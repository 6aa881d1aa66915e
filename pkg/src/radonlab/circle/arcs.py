"""Major arcs, shell cutoffs and the (delta, delta') parameter windows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..kernels import theta
from ..poly_map import PolynomialMap
from .weyl import ReducedFraction, enumerate_fractions

PAPER = "paper"
EXPLORATORY = "exploratory"


@dataclass(frozen=True)
class ArcParameters:
    """delta, delta' and the cutoff steepness c in chi_k = chi(2^(c k) .).

    The strict regime (``"paper"``) insists on delta < 1/100, delta' < delta/10 and c = 10.
    Exploratory mode only needs 0 < delta' < delta < 1 and c >= 3; c >= 3
    is the smallest steepness for which cutoffs around distinct fractions
    of one shell never overlap.
    """

    delta: float
    delta_prime: float
    regime: str = PAPER
    chi_exponent: int = 10

    def __post_init__(self) -> None:
        d, dp = self.delta, self.delta_prime
        if self.regime == PAPER:
            if not 0 < d < 0.01:
                raise ValueError(f"delta={d} outside (0, 1/100) required by the strict regime")
            if not 0 < dp < d / 10:
                raise ValueError(f"delta'={dp} outside (0, delta/10) required by the strict regime")
            if self.chi_exponent != 10:
                raise ValueError("the strict regime fixes chi_exponent = 10")
        elif self.regime == EXPLORATORY:
            if not 0 < dp < d < 1:
                raise ValueError(f"exploratory mode needs 0 < delta' < delta < 1, got delta={d}, delta'={dp}")
            if self.chi_exponent < 3:
                raise ValueError("chi_exponent must be >= 3 so that shell cutoffs stay disjoint")
        else:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def epsilon(self) -> float:
        return self.delta - self.delta_prime

    def k_max(self, j: int) -> int:
        """Largest shell index k with k <= j delta' (0 means no main term)."""
        return int(math.floor(j * self.delta_prime + 1e-12))

    def q_max(self, j: int) -> int:
        """Largest denominator of a major arc at scale j: q <= 2^(delta' j)."""
        return int(math.floor(2.0 ** (self.delta_prime * j) + 1e-9))

    def widths(self, P: PolynomialMap | Sequence[int], j: int) -> np.ndarray:
        degs = P.degrees if isinstance(P, PolynomialMap) else tuple(P)
        return np.array([2.0 ** (-(D - 1) * j - self.delta * j) for D in degs])

    def to_dict(self) -> dict:
        return {"delta": self.delta, "delta_prime": self.delta_prime, "regime": self.regime,
                "chi_exponent": self.chi_exponent}


def periodic_offset(xi: np.ndarray) -> np.ndarray:
    """Representative of xi modulo 1 in [-1/2, 1/2)."""
    xi = np.asarray(xi, dtype=np.float64)
    return xi - np.floor(xi + 0.5)


def exact_offset(xi: Sequence, af: ReducedFraction) -> np.ndarray:
    """xi - a/q reduced mod 1; rational xi (Fractions) is handled without rounding."""
    out = []
    for x, a in zip(xi, af.a):
        diff = Fraction(x) - Fraction(a, af.q) if isinstance(x, (Fraction, int)) else None
        if diff is None:
            out.append(float(periodic_offset(float(x) - a / af.q)))
        else:
            diff -= math.floor(diff + Fraction(1, 2))
            out.append(float(diff))
    return np.array(out)


def major_arc_contains(P: PolynomialMap, params: ArcParameters, j: int, af: ReducedFraction, xi: Sequence) -> bool:
    """|xi_i - a_i/q| <= 2^(-(D_i-1) j - delta j) per coordinate, distances mod 1."""
    off = np.abs(exact_offset(xi, af))
    return bool(np.all(off <= params.widths(P, j)))


def chi_k(params: ArcParameters, k: int, zeta: np.ndarray) -> np.ndarray:
    """chi(2^(c k) zeta) with chi = theta; zeta of shape (m, n) or (m,) for n = 1."""
    z = periodic_offset(zeta)
    return theta(z * 2.0 ** (params.chi_exponent * k))


def chi_radius(params: ArcParameters, k: int) -> float:
    """Outer radius of supp chi_k."""
    return 2.0 ** (1 - params.chi_exponent * k)


def major_arcs_disjoint(P: PolynomialMap, params: ArcParameters, j: int) -> bool:
    """Exhaustive pairwise check that the arcs with q <= 2^(delta' j) do not meet."""
    w = params.widths(P, j)
    fr = list(enumerate_fractions(P.n, params.q_max(j)))
    for i in range(len(fr)):
        for k in range(i + 1, len(fr)):
            a, b = fr[i], fr[k]
            apart = False
            for ai, bi, wi in zip(a.a, b.a, w):
                d = Fraction(ai, a.q) - Fraction(bi, b.q)
                d = abs(d - math.floor(d + Fraction(1, 2)))
                if d > 2 * wi:
                    apart = True
                    break
            if not apart:
                return False
    return True
