"""Truncated discrete Radon transforms, the P-maximal function, and l^r -> l^s' norm estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import maximum_filter1d
from scipy.sparse.linalg import LinearOperator, svds

from .kernels import CZKernel, kj_eval, lattice_annulus, psi
from .lattice_fn import LatticeFunction, SampledMultiplier
from .poly_map import PolynomialMap
from .threads import fft_workers, parallel_map

DEFAULT_BUDGET = 4_000_000


class BudgetExceeded(RuntimeError):
    """A requested enumeration or grid is larger than the configured budget."""


@dataclass(frozen=True, eq=False)
class AnnulusTable:
    """Lattice points y of the j-th annulus with their weights and images P(y)."""

    j: int
    points: np.ndarray
    weights: np.ndarray
    images: np.ndarray

    @classmethod
    def build(cls, P: PolynomialMap, weight: Callable[[np.ndarray], np.ndarray], j: int,
              budget: int = DEFAULT_BUDGET) -> AnnulusTable:
        expected = (2 ** (j + 2) + 1) ** P.d
        if expected > budget:
            raise BudgetExceeded(f"annulus at scale j={j} has about {expected} points (budget {budget})")
        pts = lattice_annulus(P.d, j)
        w = weight(pts)
        keep = w != 0
        pts, w = pts[keep], w[keep]
        return cls(j, pts, w, P.evaluate_many(pts))


def _aggregate(images: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if images.shape[0] == 0:
        return images, weights
    uniq, inv = np.unique(images, axis=0, return_inverse=True)
    inv = inv.ravel()
    agg = np.zeros(uniq.shape[0])
    # fsum per group keeps aggregation independent of input order
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(uniq.shape[0] + 1))
    ws = weights[order]
    for g in range(uniq.shape[0]):
        agg[g] = math.fsum(ws[bounds[g]:bounds[g + 1]])
    nz = agg != 0
    return uniq[nz], agg[nz]


@dataclass(eq=False)
class TruncatedTransform:
    """T f(x) = sum_y f(x + P(y)) w(y) for a finite weight table, typically sum_{j in range} K_j.

    The |y| >= 1 truncation of the singular integral is built in: the tables
    only contain y != 0.
    """

    P: PolynomialMap
    tables: list[AnnulusTable]
    K: CZKernel | None = None
    label: str = ""
    _shifts: np.ndarray = field(init=False, repr=False)
    _coeffs: np.ndarray = field(init=False, repr=False)
    _transfer_cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.tables:
            imgs = np.concatenate([t.images for t in self.tables])
            ws = np.concatenate([t.weights for t in self.tables])
        else:
            imgs, ws = np.zeros((0, self.P.n), dtype=np.int64), np.zeros(0)
        self._shifts, self._coeffs = _aggregate(imgs, ws)

    @classmethod
    def from_kernel(cls, P: PolynomialMap, K: CZKernel, j_range: tuple[int, int],
                    budget: int = DEFAULT_BUDGET) -> TruncatedTransform:
        if K.d != P.d:
            raise ValueError(f"kernel lives on R^{K.d} but P has d={P.d}")
        j0, j1 = j_range
        if j0 < 0 or j1 < j0:
            raise ValueError("j_range must satisfy 0 <= j_min <= j_max")
        tabs = [AnnulusTable.build(P, lambda y, j=j: kj_eval(K, j, y), j, budget) for j in range(j0, j1 + 1)]
        return cls(P, tabs, K, f"T[{K.descriptor}, j={j0}..{j1}]")

    @classmethod
    def single_scale_average(cls, P: PolynomialMap, j: int, budget: int = DEFAULT_BUDGET) -> TruncatedTransform:
        """A_j f(x) = sum_y f(x + P(y)) psi(2^-j y) / sum_y psi(2^-j y)."""
        tab = AnnulusTable.build(P, lambda y: psi(np.asarray(y, float) * 2.0 ** (-j)), j, budget)
        tab = AnnulusTable(j, tab.points, tab.weights / math.fsum(tab.weights), tab.images)
        return cls(P, [tab], None, f"A[j={j}]")

    @classmethod
    def from_weights(cls, P: PolynomialMap, points: Sequence, weights: Sequence[float], label: str = "custom") -> TruncatedTransform:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, P.d)
        if np.any(np.all(pts == 0, axis=1)):
            raise ValueError("the weight table must not contain y = 0")
        tab = AnnulusTable(-1, pts, np.asarray(weights, dtype=np.float64), P.evaluate_many(pts))
        return cls(P, [tab], None, label)

    @property
    def shifts(self) -> np.ndarray:
        """Distinct images u = P(y), shape (k, n)."""
        return self._shifts

    @property
    def coefficients(self) -> np.ndarray:
        return self._coeffs

    def _span(self) -> tuple[np.ndarray, np.ndarray]:
        if self._shifts.shape[0] == 0:
            z = np.zeros(self.P.n, dtype=np.int64)
            return z, z
        return self._shifts.min(axis=0), self._shifts.max(axis=0)

    def output_box(self, f: LatticeFunction) -> tuple[tuple[int, ...], tuple[int, ...]]:
        umin, umax = self._span()
        lo = tuple(int(l - b) for l, b in zip(f.lo, umax))
        shape = tuple(int(s + b - a) for s, a, b in zip(f.shape, umin, umax))
        return lo, shape

    def apply(self, f: LatticeFunction, method: str = "direct") -> LatticeFunction:
        if f.n != self.P.n:
            raise ValueError(f"f lives on Z^{f.n}, P maps into Z^{self.P.n}")
        if method == "direct":
            return self._apply_direct(f)
        if method == "fft":
            return self._apply_fft(f)
        raise ValueError(f"unknown method {method!r}")

    def _apply_direct(self, f: LatticeFunction) -> LatticeFunction:
        lo, shape = self.output_box(f)
        out = np.zeros(shape, dtype=np.complex128)
        _, umax = self._span()
        for u, c in zip(self._shifts, self._coeffs):
            off = umax - u
            sl = tuple(slice(int(o), int(o) + s) for o, s in zip(off, f.shape))
            out[sl] += c * f.values
        return LatticeFunction(lo, out)

    def transfer(self, shape: tuple[int, ...]) -> np.ndarray:
        """Samples of m(xi) e(-u_min . xi) = sum_u c_u e((u - u_min) . xi) on prod_i (Z/N_i)/N_i.

        The shift by the smallest image keeps every frequency non-negative,
        which is what the zero-padded buffer of :meth:`_apply_fft` needs.
        """
        key = tuple(shape)
        if key not in self._transfer_cache:
            umin, _ = self._span()
            spec = np.zeros(key, dtype=np.complex128)
            idx = tuple(((self._shifts - umin) % np.asarray(key)).T)
            np.add.at(spec, idx, self._coeffs)
            self._transfer_cache[key] = sfft.ifftn(spec, norm="forward", workers=fft_workers())
        return self._transfer_cache[key]

    def _apply_fft(self, f: LatticeFunction) -> LatticeFunction:
        lo, shape = self.output_box(f)
        grid = tuple(sfft.next_fast_len(s) for s in shape)
        buf = np.zeros(grid, dtype=np.complex128)
        umin, umax = self._span()
        sl = tuple(slice(int(b - a), int(b - a) + s) for a, b, s in zip(umin, umax, f.shape))
        buf[sl] = f.values
        spec = sfft.fftn(buf, workers=fft_workers())
        res = sfft.ifftn(spec * self.transfer(grid), workers=fft_workers())
        return LatticeFunction(lo, res[tuple(slice(0, s) for s in shape)])

    def bilinear(self, f: LatticeFunction, g: LatticeFunction) -> complex:
        """<T f, g> = sum_u c_u C(u) with C(u) = sum_x f(x + u) conj g(x).

        Only lags that can meet both supports are formed, so the cost does not
        depend on how far the shifts reach.
        """
        from scipy.signal import correlate

        C = correlate(f.values, g.values, mode="full", method="auto")
        # C[k] pairs f at lag u = k + base, base = f.lo - g.lo - (len_g - 1)
        base = np.asarray(f.lo) - np.asarray(g.lo) - (np.asarray(g.shape) - 1)
        idx = self._shifts - base
        ok = np.all((idx >= 0) & (idx < np.asarray(C.shape)), axis=1)
        if not ok.any():
            return 0j
        terms = self._coeffs[ok] * C[tuple(idx[ok].T)]
        return complex(math.fsum(terms.real), math.fsum(terms.imag))

    def multiplier(self, N: int) -> SampledMultiplier:
        return SampledMultiplier.from_trig(self._shifts, self._coeffs.astype(np.complex128), N, {"label": self.label})

    def multiplier_at(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64).reshape(-1, self.P.n)
        return np.exp(2j * np.pi * (xi @ self._shifts.T.astype(np.float64))) @ self._coeffs

    def space_kernel(self) -> LatticeFunction:
        """k(v) = sum_{u = -v} c_u, so that T f = k * f (convolution)."""
        umin, umax = self._span()
        lo = tuple(int(-b) for b in umax)
        shape = tuple(int(b - a + 1) for a, b in zip(umin, umax))
        vals = np.zeros(shape, dtype=np.complex128)
        idx = tuple((-self._shifts - np.asarray(lo)).T)
        np.add.at(vals, idx, self._coeffs)
        return LatticeFunction(lo, vals)

    def as_matrix(self, lo: Sequence[int], shape: Sequence[int]) -> np.ndarray:
        """Dense matrix of f -> (T f) restricted to the box, for f supported in the box."""
        lo, shape = tuple(lo), tuple(shape)
        m = math.prod(shape)
        A = np.zeros((m, m))
        pts = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, len(shape))
        for u, c in zip(self._shifts, self._coeffs):
            src = pts + u
            ok = np.all((src >= 0) & (src < np.asarray(shape)), axis=1)
            rows = np.nonzero(ok)[0]
            cols = np.ravel_multi_index(tuple(src[ok].T), shape)
            A[rows, cols] += c
        return A


def maximal(P: PolynomialMap | Sequence[int], f: LatticeFunction, sidelengths: Sequence[int]) -> LatticeFunction:
    """Dyadic P-maximal function with cubes containing the origin.

    M f(x) = max over l in ``sidelengths`` and over P-cubes Q of side
    cardinalities l^D_i with 0 in Q of |Q|^-1 sum_{y in Q} |f(x - y)|.
    """
    degs = P.degrees if isinstance(P, PolynomialMap) else tuple(P)
    if len(degs) != f.n:
        raise ValueError("degree vector does not match the dimension of f")
    ells = sorted({int(l) for l in sidelengths})
    if not ells or ells[0] < 1:
        raise ValueError("sidelengths must be positive integers")
    smax = [max(l**D for l in ells) for D in degs]
    lo = tuple(l - (s - 1) for l, s in zip(f.lo, smax))
    shape = tuple(fs + 2 * (s - 1) for fs, s in zip(f.shape, smax))
    base = np.abs(f.embed(lo, shape))
    best = np.zeros(shape)
    for ell in ells:
        sides = [ell**D for D in degs]
        win = base
        # box sums over windows (e - s, e] on every axis, then the max over windows e in [x, x + s - 1]
        for ax, s in enumerate(sides):
            c = np.cumsum(win, axis=ax)
            pad = np.zeros_like(c)
            shifted = np.take(c, np.arange(c.shape[ax] - s), axis=ax)
            idx = [slice(None)] * c.ndim
            idx[ax] = slice(s, None)
            pad[tuple(idx)] = shifted
            win = c - pad
        for ax, s in enumerate(sides):
            win = maximum_filter1d(win, s, axis=ax, mode="constant", cval=0.0, origin=-(s // 2))
        best = np.maximum(best, win / math.prod(sides))
    return LatticeFunction(lo, best)


@dataclass
class NormEstimate:
    """Lower bound for ||T||_{l^r -> l^s'} on a box, with a maximizing pair."""

    value: float
    f: np.ndarray
    g: np.ndarray
    r: float
    s_prime: float
    converged: bool
    iterations: int
    method: str
    svd_value: float | None = None
    is_lower_bound: bool = True


def _conj_exp(p: float) -> float:
    if p == 1:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1)


def _norm(v: np.ndarray, p: float) -> float:
    return lp_vec(v, p)


def lp_vec(v: np.ndarray, p: float) -> float:
    a = np.abs(v)
    if p == math.inf:
        return float(a.max()) if a.size else 0.0
    return float(np.sum(a**p) ** (1.0 / p))


def _dual(v: np.ndarray, p: float) -> np.ndarray:
    """Unit vector x in l^p' norm with <v, x> = ||v||_p (p is the norm of v)."""
    a = np.abs(v)
    ph = np.where(a > 0, v / np.where(a > 0, a, 1), 0)
    if p == math.inf:
        x = np.zeros_like(v)
        k = int(np.argmax(a))
        x[k] = np.conj(ph[k]) if np.iscomplexobj(v) else np.sign(v[k]) or 1.0
        return x
    if p == 1:
        return np.conj(ph) if np.iscomplexobj(v) else np.sign(v)
    nv = _norm(v, p)
    if nv == 0:
        return np.zeros_like(v)
    w = (a / nv) ** (p - 1)
    return (np.conj(ph) if np.iscomplexobj(v) else np.sign(v)) * w


def operator_matrix(op, lo: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """Dense matrix of a linear map on functions supported in the box (output restricted to the box)."""
    if hasattr(op, "as_matrix"):
        return op.as_matrix(lo, shape)
    m = math.prod(shape)
    cols = []
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        img = op(LatticeFunction(tuple(lo), e.reshape(shape)))
        cols.append(img.embed(lo, shape).ravel())
    A = np.array(cols).T
    return A.real if np.allclose(A.imag, 0) else A


def estimate_operator_norm(op, lo: Sequence[int], shape: Sequence[int], r: float, s_prime: float,
                           restarts: int = 8, iterations: int = 500, tol: float = 1e-12,
                           seed: int = 0, svd_check_limit: int = 4096) -> NormEstimate:
    """Alternating (Boyd) ascent for sup |<T f, g>| / (||f||_r ||g||_s), s the dual of s'.

    Endpoint cases with closed forms (r = 1: largest column norm; s' = inf:
    largest row norm) are evaluated exactly.  For r = s' = 2 a Lanczos
    iteration is used and, on small boxes, cross-checked against a dense SVD.
    """
    if r < 1 or s_prime < 1:
        raise ValueError("exponents must lie in [1, inf]")
    A = operator_matrix(op, lo, shape)
    m = A.shape[1]
    svd_val = float(np.linalg.svd(A, compute_uv=False)[0]) if m <= svd_check_limit else None
    q = s_prime

    if r == 1:
        norms = np.array([_norm(A[:, k], q) for k in range(m)])
        k = int(np.argmax(norms))
        f = np.zeros(m)
        f[k] = 1.0
        g = _dual(A[:, k], q)
        return NormEstimate(float(norms[k]), f.reshape(shape), g.reshape(shape), r, s_prime, True, 1, "column-max", svd_val)
    if q == math.inf:
        rp = _conj_exp(r)
        norms = np.array([_norm(A[i, :], rp) for i in range(A.shape[0])])
        i = int(np.argmax(norms))
        f = _dual(np.conj(A[i, :]), rp)
        g = np.zeros(A.shape[0])
        g[i] = 1.0
        return NormEstimate(float(norms[i]), f.reshape(shape), g.reshape(shape), r, s_prime, True, 1, "row-max", svd_val)

    if r == 2 and q == 2:
        lin = LinearOperator(A.shape, matvec=lambda v: A @ v, rmatvec=lambda v: A.conj().T @ v, dtype=A.dtype)
        try:
            u, sv, vt = svds(lin, k=1, tol=tol, maxiter=iterations * 10, random_state=seed)
            val, f, g, conv = float(sv[0]), vt[0].conj(), u[:, 0], True
        except Exception:  # ARPACK non-convergence: fall back to the generic iteration below
            val, conv = -1.0, False
        if conv:
            return NormEstimate(val, f.reshape(shape), g.reshape(shape), r, s_prime, True, 0, "lanczos", svd_val)

    rng = np.random.default_rng(seed)
    rp = _conj_exp(r)
    starts = [rng.standard_normal(m) for _ in range(max(1, restarts))]
    col = int(np.argmax([_norm(A[:, k], q) for k in range(m)]))
    e = np.zeros(m)
    e[col] = 1.0
    starts.append(e)

    def run(x0: np.ndarray):
        x = x0 / _norm(x0, r)
        prev, val, it, conv = -1.0, 0.0, 0, False
        for it in range(1, iterations + 1):
            y = A @ x
            val = _norm(y, q)
            if val == 0:
                break
            z = _dual(y, q)
            w = A.conj().T @ z
            x = _dual(w, rp)
            x = x / _norm(x, r)
            if abs(val - prev) <= tol * max(val, 1e-300):
                conv = True
                break
            prev = val
        y = A @ x
        return _norm(y, q), x, _dual(y, q), conv, it

    results = parallel_map(run, starts)
    best = max(results, key=lambda t: t[0])
    val, f, g, conv, it = best
    return NormEstimate(float(val), f.reshape(shape), g.reshape(shape), r, s_prime, bool(conv), int(it),
                        "alternating-ascent", svd_val)
