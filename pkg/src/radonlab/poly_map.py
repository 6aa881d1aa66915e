"""Integer polynomial mappings P: Z^d -> Z^n and the anisotropic geometry they induce.

A map is stored as a coefficient table ``alpha -> c_alpha`` with ``alpha`` a
multiindex in N_0^d and ``c_alpha`` an integer vector in Z^n.  The degrees
``D_i = deg P_i`` drive everything downstream: P-cube shapes, the gauge
``rho(x) = max_i |x_i|^(1/D_i)`` and the major-arc widths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Multiindex = tuple[int, ...]

_INT64_SAFE = 2**62


@dataclass(frozen=True)
class PolynomialMap:
    """P(t) = sum_alpha c_alpha t^alpha with exact integer coefficients.

    Use :meth:`from_coeffs` rather than the raw constructor; it normalizes the
    table (merges duplicates, drops zeros, sorts lexicographically).
    """

    d: int
    n: int
    terms: tuple[tuple[Multiindex, tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        if self.d < 1 or self.n < 1:
            raise ValueError("dimensions d and n must be positive")
        for alpha, c in self.terms:
            if len(alpha) != self.d or len(c) != self.n:
                raise ValueError(f"term {alpha}->{c} does not match d={self.d}, n={self.n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in multiindex {alpha}")
            if sum(alpha) == 0 and any(c):
                raise ValueError("P(0) must vanish: constant term is not allowed")
        for i in range(self.n):
            if not any(c[i] for _, c in self.terms):
                raise ValueError(f"component P_{i + 1} is identically zero; its degree is undefined")

    @classmethod
    def from_coeffs(cls, d: int, n: int, coeffs: Mapping[Sequence[int], Sequence[int]] | Iterable) -> PolynomialMap:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        table: dict[Multiindex, list[int]] = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            c = [int(v) for v in (c if isinstance(c, (list, tuple, np.ndarray)) else [c])]
            if len(c) != n:
                raise ValueError(f"coefficient {c} for {alpha} is not a vector in Z^{n}")
            acc = table.setdefault(alpha, [0] * n)
            for i in range(n):
                acc[i] += c[i]
        terms = tuple(sorted((a, tuple(c)) for a, c in table.items() if any(c)))
        return cls(d, n, terms)

    @classmethod
    def monomial_curve(cls, *powers: int) -> PolynomialMap:
        """The curve t -> (t^k1, ..., t^kn) for d = 1."""
        n = len(powers)
        return cls.from_coeffs(1, n, {(k,): [int(i == m) for i in range(n)] for m, k in enumerate(powers)})

    @property
    def coeffs(self) -> dict[Multiindex, tuple[int, ...]]:
        return dict(self.terms)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(max(sum(a) for a, c in self.terms if c[i]) for i in range(self.n))

    @property
    def degree(self) -> int:
        return max(self.degrees)

    @property
    def d_star(self) -> int:
        """Largest single-variable exponent occurring in P."""
        return max(max(a) for a, _ in self.terms)

    @property
    def sum_degrees(self) -> int:
        return sum(self.degrees)

    def __add__(self, other: PolynomialMap) -> PolynomialMap:
        if (self.d, self.n) != (other.d, other.n):
            raise ValueError("cannot add maps with different dimensions")
        return PolynomialMap.from_coeffs(self.d, self.n, list(self.terms) + list(other.terms))

    def evaluate(self, t: Sequence[int] | int) -> tuple[int, ...]:
        """Exact value P(t) in Python integers (no overflow possible)."""
        t = (int(t),) if isinstance(t, (int, np.integer)) else tuple(int(v) for v in t)
        if len(t) != self.d:
            raise ValueError(f"point {t} is not in Z^{self.d}")
        out = [0] * self.n
        for alpha, c in self.terms:
            mono = math.prod(tv**a for tv, a in zip(t, alpha))
            for i in range(self.n):
                out[i] += c[i] * mono
        return tuple(out)

    def magnitude_bound(self, radius: int) -> int:
        """Upper bound for max |P_i(t)| over the box |t_k| <= radius (exact integer)."""
        radius = int(radius)
        return max(sum(abs(c[i]) * radius ** sum(a) for a, c in self.terms) for i in range(self.n))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized P on integer points of shape (m, d), returned as int64 (m, n).

        Raises OverflowError when the values could leave the int64 range; the
        computation is never allowed to wrap.
        """
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        radius = int(np.abs(pts).max()) if pts.size else 0
        if self.magnitude_bound(radius) >= _INT64_SAFE:
            raise OverflowError(f"P(t) may exceed int64 for |t| <= {radius}; use evaluate() for exact values")
        out = np.zeros((pts.shape[0], self.n), dtype=np.int64)
        for alpha, c in self.terms:
            mono = np.ones(pts.shape[0], dtype=np.int64)
            for k, a in enumerate(alpha):
                if a:
                    mono = mono * pts[:, k] ** a
            out += mono[:, None] * np.asarray(c, dtype=np.int64)[None, :]
        return out

    def evaluate_real(self, points: np.ndarray) -> np.ndarray:
        """P on real points of shape (m, d); float64 result of shape (m, n)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.d)
        out = np.zeros((pts.shape[0], self.n))
        for alpha, c in self.terms:
            mono = np.ones(pts.shape[0])
            for k, a in enumerate(alpha):
                if a:
                    mono = mono * pts[:, k] ** a
            out += mono[:, None] * np.asarray(c, dtype=np.float64)[None, :]
        return out

    def phase_gradient_bound(self, eta: Sequence[float], radius: float) -> float:
        """Bound for sup |grad_t (P(t).eta)| over |t| <= radius."""
        eta = np.asarray(eta, dtype=np.float64).reshape(self.n)
        total = 0.0
        for alpha, c in self.terms:
            deg = sum(alpha)
            total += abs(float(np.dot(c, eta))) * deg * radius ** (deg - 1)
        return total

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "coeffs": [{"alpha": list(a), "c": list(c)} for a, c in self.terms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Mapping) -> PolynomialMap:
        for key in ("d", "n", "coeffs"):
            if key not in doc:
                raise ValueError(f"polynomial map document is missing {key!r}")
        for entry in doc["coeffs"]:
            for v in list(entry["alpha"]) + list(entry["c"]):
                if not isinstance(v, int) or isinstance(v, bool):
                    raise ValueError(f"coefficient table must hold exact integers, got {v!r}")
        return cls.from_coeffs(int(doc["d"]), int(doc["n"]), [(e["alpha"], e["c"]) for e in doc["coeffs"]])

    @classmethod
    def from_json(cls, text: str) -> PolynomialMap:
        return cls.from_dict(json.loads(text))


def evaluate(P: PolynomialMap, t: Sequence[int] | int) -> tuple[int, ...]:
    return P.evaluate(t)


@dataclass(frozen=True)
class ConditionC:
    holds: bool
    witnesses: tuple[Multiindex | None, ...]

    def __bool__(self) -> bool:
        return self.holds


def check_condition_C(P: PolynomialMap) -> ConditionC:
    """Decide Condition (C): each P_i has a top-degree coefficient equal to e_i.

    Witnesses are the lexicographically smallest qualifying multiindices
    (``None`` where none exists).
    """
    degs = P.degrees
    witnesses: list[Multiindex | None] = []
    for i in range(P.n):
        unit = tuple(int(k == i) for k in range(P.n))
        found = [a for a, c in P.terms if sum(a) == degs[i] and c == unit]
        witnesses.append(min(found) if found else None)
    return ConditionC(all(w is not None for w in witnesses), tuple(witnesses))


@dataclass(frozen=True)
class LojasiewiczVerdict:
    """Outcome of a grid probe of |P(t)| >= |t|^beta on L0 <= |t| <= R.

    ``counterexample is None`` only means that no grid point violated the
    inequality; it is not a proof of Condition (Ł).
    """

    counterexample: tuple[float, ...] | None
    points_checked: int
    beta: float
    L0: float
    R: float
    grid_step: float

    @property
    def no_counterexample_found(self) -> bool:
        return self.counterexample is None


def probe_condition_L(P: PolynomialMap, beta: float, L0: float, R: float, grid_step: float) -> LojasiewiczVerdict:
    """Falsification probe for Condition (Ł) on the real grid (grid_step * Z)^d.

    Points are scanned in lexicographic order and the first t in the annulus
    with |P(t)| < |t|^beta is reported.  A relative slack of 1e-12 guards
    against rounding turning an equality into a violation.
    """
    if beta <= 0 or L0 <= 0:
        raise ValueError("beta and L0 must be positive")
    if R < L0:
        raise ValueError("sampling radius R must be at least L0")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    kmax = int(math.floor(R / grid_step))
    axis = np.arange(-kmax, kmax + 1) * grid_step
    checked = 0
    # scan slabs of the first coordinate in increasing order
    for t0 in axis:
        if P.d == 1:
            pts = np.array([[t0]])
        else:
            rest = np.stack(np.meshgrid(*([axis] * (P.d - 1)), indexing="ij"), axis=-1).reshape(-1, P.d - 1)
            pts = np.column_stack([np.full(rest.shape[0], t0), rest])
        norm = np.linalg.norm(pts, axis=1)
        keep = (norm >= L0) & (norm <= R)
        if not keep.any():
            continue
        pts, norm = pts[keep], norm[keep]
        checked += pts.shape[0]
        val = np.linalg.norm(P.evaluate_real(pts), axis=1)
        bad = np.nonzero(val < norm**beta * (1.0 - 1e-12))[0]
        if bad.size:
            t = tuple(float(v) for v in pts[bad[0]])
            return LojasiewiczVerdict(t, checked, beta, L0, R, grid_step)
    return LojasiewiczVerdict(None, checked, beta, L0, R, grid_step)


def _exact_root(a: int, k: int) -> float:
    r = a ** (1.0 / k)
    ri = round(r)
    return float(ri) if ri**k == a else r


def rho(P: PolynomialMap | Sequence[int], x: Sequence[int]) -> float:
    """Anisotropic gauge max_i |x_i|^(1/D_i); accepts a map or its degree tuple."""
    degs = P.degrees if isinstance(P, PolynomialMap) else tuple(P)
    x = tuple(int(v) for v in x)
    if len(x) != len(degs):
        raise ValueError("point dimension does not match the number of degrees")
    return max(_exact_root(abs(v), D) for v, D in zip(x, degs))


def rho_many(degrees: Sequence[int], points: np.ndarray) -> np.ndarray:
    pts = np.abs(np.asarray(points, dtype=np.float64)).reshape(-1, len(degrees))
    return np.max(pts ** (1.0 / np.asarray(degrees, dtype=np.float64)), axis=1)


@dataclass(frozen=True)
class PCube:
    """An anisotropic box prod_i [lo_i, lo_i + shape_i) in Z^n with nominal sidelength.

    The i-th side holds roughly sidelength**D_i lattice points.  Centers may
    be half-integers (even side cardinalities), which is what the dyadic
    P-grid needs.
    """

    lo: tuple[int, ...]
    shape: tuple[int, ...]
    sidelength: float
    degrees: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.lo) == len(self.shape) == len(self.degrees)):
            raise ValueError("lo, shape and degrees must have the same length")
        if any(s < 1 for s in self.shape):
            raise ValueError("P-cubes are non-empty")
        if self.sidelength <= 0:
            raise ValueError("sidelength must be positive")
        for s, D in zip(self.shape, self.degrees):
            ratio = s ** (1.0 / D) / self.sidelength
            if not 0.5 <= ratio <= 2.0:
                raise ValueError(f"side cardinality {s} is incompatible with sidelength {self.sidelength} (D={D})")

    @classmethod
    def centered(cls, center: Sequence[int], sidelength: float, degrees: Sequence[int]) -> PCube:
        """Cube with integer center whose sides hold round(l^D_i) points, made odd."""
        shape = []
        for D in degrees:
            s = max(1, round(sidelength**D))
            shape.append(s if s % 2 else s + 1)
        lo = tuple(int(c) - (s - 1) // 2 for c, s in zip(center, shape))
        return cls(lo, tuple(shape), float(sidelength), tuple(degrees))

    @classmethod
    def dyadic(cls, lo: Sequence[int], level: int, degrees: Sequence[int]) -> PCube:
        """Cube of sidelength 2**level with sides of exactly 2**(level*D_i) points."""
        return cls(tuple(int(v) for v in lo), tuple(2 ** (level * D) for D in degrees), float(2**level), tuple(degrees))

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def hi(self) -> tuple[int, ...]:
        """Exclusive upper corner."""
        return tuple(l + s for l, s in zip(self.lo, self.shape))

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(l + (s - 1) / 2 for l, s in zip(self.lo, self.shape))

    @property
    def half_extents(self) -> tuple[float, ...]:
        return tuple((s - 1) / 2 for s in self.shape)

    @property
    def cardinality(self) -> int:
        return math.prod(self.shape)

    def contains(self, x: Sequence[int]) -> bool:
        return all(l <= v < h for v, l, h in zip(x, self.lo, self.hi))

    def points(self) -> np.ndarray:
        axes = [np.arange(l, h) for l, h in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "shape": list(self.shape), "sidelength": self.sidelength, "degrees": list(self.degrees)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> PCube:
        return cls(tuple(doc["lo"]), tuple(doc["shape"]), float(doc["sidelength"]), tuple(doc["degrees"]))


def dilate_cube(Q: PCube, nu: int = 1) -> PCube:
    """2^nu Q: smallest P-cube with the same center and sidelength doubled nu times.

    Each step keeps the parity of every side so the center stays fixed, and
    takes the smallest cardinality >= round((2l)^D_i).
    """
    if nu < 1:
        raise ValueError("nu must be a positive integer")
    for _ in range(int(nu)):
        ell = 2.0 * Q.sidelength
        lo, shape = [], []
        for l, s, D in zip(Q.lo, Q.shape, Q.degrees):
            target = max(1, round(ell**D))
            s_new = target if (target - s) % 2 == 0 else target + 1
            s_new = max(s_new, s)
            lo.append(l - (s_new - s) // 2)
            shape.append(s_new)
        Q = PCube(tuple(lo), tuple(shape), ell, Q.degrees)
    return Q
