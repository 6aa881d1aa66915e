"""Exact membership tests for the proven sparse region."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from ..poly_map import PolynomialMap

HALF = Fraction(1, 2)


def as_fraction(x) -> Fraction:
    """Exact rational from int/Fraction/str; floats are read through their shortest repr."""
    if isinstance(x, (Fraction, int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


def exponent_count(P: PolynomialMap) -> int:
    """N_P = (1 + deg P) * sum_i deg P_i."""
    return (1 + P.degree) * P.sum_degrees


@dataclass(frozen=True)
class RegionVerdict:
    in_Omega_m: bool
    major_condition_ok: bool
    N_P: int
    boundary: Fraction
    inv_r: Fraction
    inv_s: Fraction
    eps_prime: Fraction
    eps_source: str

    def to_dict(self) -> dict:
        return {
            "in_Omega_m": self.in_Omega_m,
            "major_condition_ok": self.major_condition_ok,
            "N_P": self.N_P,
            "boundary": str(self.boundary),
            "inv_r": str(self.inv_r),
            "inv_s": str(self.inv_s),
            "eps_prime": str(self.eps_prime),
            "eps_source": self.eps_source,
        }


def proven_region(P: PolynomialMap, eps_prime, r=None, s=None, *, inv_r=None, inv_s=None,
                  eps_source: str = "analytic input") -> RegionVerdict:
    """Decide max(1/r, 1/s) < 1/2 + eps'/(2 N_P) and 1/D_* > (n+1)/2 (|1/r - 1/2| + |1/s - 1/2|).

    Exponents may be given directly (r, s) or through their reciprocals.
    All arithmetic is rational; ``eps_source`` records where eps' came from.
    """
    eps = as_fraction(eps_prime)
    if eps <= 0:
        raise ValueError("eps_prime must be positive")
    ir = as_fraction(inv_r) if inv_r is not None else 1 / as_fraction(r)
    is_ = as_fraction(inv_s) if inv_s is not None else 1 / as_fraction(s)
    for v in (ir, is_):
        if not 0 <= v <= 1:
            raise ValueError("exponents must lie in [1, inf]")
    NP = exponent_count(P)
    boundary = HALF + eps / (2 * NP)
    in_m = max(ir, is_) < boundary
    major = Fraction(1, P.d_star) > Fraction(P.n + 1, 2) * (abs(ir - HALF) + abs(is_ - HALF))
    return RegionVerdict(in_m, major, NP, boundary, ir, is_, eps, eps_source)
