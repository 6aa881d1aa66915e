"""Sparse collections of P-cubes: verification, construction, sparse forms and ratio tests."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy import sparse as sps
from scipy.sparse.csgraph import maximum_flow

from .lattice_fn import LatticeFunction, local_average, pair
from .poly_map import PCube, PolynomialMap
from .transform import estimate_operator_norm, maximal
from .threads import parallel_map

DEFAULT_SIGMA = Fraction(1, 2)
FLOW_BUDGET = 2_000_000

# Empirical ceilings for the per-instance ratios of the two proposition checks.
# The stopping time below selects cubes with averages at most C0 times their
# parent's, so ratios are controlled by powers of C0 = 4 at sigma = 1/2.
SP_CONSTANT = 16.0
MAXIMAL_CONSTANT = 16.0


def _frac(sigma) -> Fraction:
    s = Fraction(sigma) if not isinstance(sigma, float) else Fraction(repr(sigma))
    if not 0 < s <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    return s


@dataclass
class SparseCollection:
    cubes: list[PCube]
    sigma: Fraction = DEFAULT_SIGMA
    witnesses: list[np.ndarray] | None = None
    parents: list[int] | None = None

    def __len__(self) -> int:
        return len(self.cubes)

    def to_json(self) -> str:
        doc = {"sigma": str(self.sigma), "cubes": [q.to_dict() for q in self.cubes]}
        if self.witnesses is not None:
            doc["witnesses"] = [w.tolist() for w in self.witnesses]
        if self.parents is not None:
            doc["parents"] = list(self.parents)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> SparseCollection:
        doc = json.loads(text)
        wit = [np.asarray(w, dtype=np.int64).reshape(len(w), -1) for w in doc["witnesses"]] if "witnesses" in doc else None
        return cls([PCube.from_dict(c) for c in doc["cubes"]], Fraction(doc["sigma"]), wit, doc.get("parents"))


def sparse_form(S: SparseCollection, f: LatticeFunction, g: LatticeFunction, r: float, s: float) -> float:
    """Lambda_{r,s}(f, g) = sum_Q |Q| <f>_{Q,r} <g>_{Q,s}."""
    return math.fsum(Q.cardinality * local_average(f, Q, r) * local_average(g, Q, s) for Q in S.cubes)


# -- verification -------------------------------------------------------------

@dataclass
class SparsityVerdict:
    status: str  # certified | refuted | heuristic-certified | inconclusive
    witnesses: list[np.ndarray] | None = None
    cut: list[int] | None = None
    demand: int = 0
    flow: int = 0

    @property
    def certified(self) -> bool:
        return self.status in ("certified", "heuristic-certified")

    @property
    def exact(self) -> bool:
        return self.status in ("certified", "refuted")


def _demands(S: SparseCollection, sigma: Fraction) -> list[int]:
    return [math.ceil(sigma * Q.cardinality) for Q in S.cubes]


def _point_index(S: SparseCollection) -> tuple[np.ndarray, list[np.ndarray]]:
    per = [Q.points() for Q in S.cubes]
    allp = np.unique(np.concatenate(per), axis=0) if per else np.zeros((0, 1), np.int64)
    idx = []
    for p in per:
        # rows of allp are sorted lexicographically; locate each point
        view = np.ascontiguousarray(allp).view([("", allp.dtype)] * allp.shape[1]).ravel()
        pv = np.ascontiguousarray(p).view([("", p.dtype)] * p.shape[1]).ravel()
        idx.append(np.searchsorted(view, pv))
    return allp, idx


def check_witnesses(S: SparseCollection, witnesses: Sequence[np.ndarray], sigma) -> bool:
    """Independent check of |E_Q| >= sigma |Q|, E_Q subset of Q and pairwise disjointness."""
    sigma = _frac(sigma)
    seen: set[tuple] = set()
    for Q, E in zip(S.cubes, witnesses):
        pts = {tuple(int(v) for v in p) for p in np.asarray(E).reshape(len(E), -1)} if len(E) else set()
        if len(pts) < sigma * Q.cardinality or not all(Q.contains(p) for p in pts) or pts & seen:
            return False
        seen |= pts
    return True


def verify_sparsity(S: SparseCollection, sigma=None, budget: int = FLOW_BUDGET) -> SparsityVerdict:
    """Decide whether disjoint E_Q with |E_Q| >= ceil(sigma |Q|) exist, by integral max-flow.

    Network: source -> cube (capacity ceil(sigma|Q|)), cube -> point (1),
    point -> sink (1).  A full flow yields witnesses; otherwise the cubes
    reachable from the source in the residual graph form a Hall violator.
    """
    sigma = _frac(S.sigma if sigma is None else sigma)
    dem = _demands(S, sigma)
    m = len(S.cubes)
    if m == 0:
        return SparsityVerdict("certified", [], None, 0, 0)
    volume = sum(Q.cardinality for Q in S.cubes)
    if volume > budget:
        return _greedy(S, dem)
    allp, idx = _point_index(S)
    P = allp.shape[0]
    src, sink = 0, m + P + 1
    rows, cols, caps = [], [], []
    for i in range(m):
        rows.append(src); cols.append(1 + i); caps.append(dem[i])
        rows.extend([1 + i] * idx[i].size); cols.extend((1 + m + idx[i]).tolist()); caps.extend([1] * idx[i].size)
    rows.extend(range(1 + m, 1 + m + P)); cols.extend([sink] * P); caps.extend([1] * P)
    G = sps.csr_matrix((np.asarray(caps, np.int32), (rows, cols)), shape=(sink + 1, sink + 1))
    res = maximum_flow(G, src, sink, method="dinic")
    total = sum(dem)
    F = res.flow.tocsr()
    if res.flow_value == total:
        wit = []
        for i in range(m):
            row = F.getrow(1 + i)
            used = row.indices[(row.data > 0) & (row.indices > m) & (row.indices <= m + P)] - 1 - m
            wit.append(allp[np.sort(used)])
        return SparsityVerdict("certified", wit, None, total, int(res.flow_value))
    # residual reachability from the source
    resid = (G - F).tocsr()
    resid.eliminate_zeros()
    back = (-F).tocsr()
    back.data = np.where(back.data > 0, back.data, 0)
    back.eliminate_zeros()
    reach = np.zeros(sink + 1, bool)
    reach[src] = True
    stack = [src]
    while stack:
        u = stack.pop()
        for M in (resid, back):
            r = M.getrow(u)
            for v, c in zip(r.indices, r.data):
                if c > 0 and not reach[v]:
                    reach[v] = True
                    stack.append(v)
    cut = [i for i in range(m) if reach[1 + i]]
    return SparsityVerdict("refuted", None, cut, total, int(res.flow_value))


def _greedy(S: SparseCollection, dem: list[int]) -> SparsityVerdict:
    used: set[tuple] = set()
    wit: list[np.ndarray | None] = [None] * len(S.cubes)
    for i in sorted(range(len(S.cubes)), key=lambda k: S.cubes[k].cardinality):
        take = []
        for p in S.cubes[i].points():
            t = tuple(int(v) for v in p)
            if t not in used:
                take.append(t)
                if len(take) == dem[i]:
                    break
        if len(take) < dem[i]:
            return SparsityVerdict("inconclusive", None, None, sum(dem), 0)
        used.update(take)
        wit[i] = np.array(take, dtype=np.int64)
    return SparsityVerdict("heuristic-certified", wit, None, sum(dem), sum(dem))


def hall_violator(S: SparseCollection, cut: Sequence[int], sigma) -> bool:
    """True iff the union of the cubes in ``cut`` is smaller than their total demand."""
    sigma = _frac(sigma)
    pts: set[tuple] = set()
    for i in cut:
        pts |= {tuple(p) for p in S.cubes[i].points().tolist()}
    return len(pts) < sum(math.ceil(sigma * S.cubes[i].cardinality) for i in cut)


def brute_force_sparsity(S: SparseCollection, sigma) -> bool:
    """Exhaustive Hall condition over all subfamilies (exact, exponential in |S|)."""
    sigma = _frac(sigma)
    sets = [{tuple(p) for p in Q.points().tolist()} for Q in S.cubes]
    dem = _demands(S, sigma)
    for k in range(1, len(sets) + 1):
        for sub in combinations(range(len(sets)), k):
            if len(set().union(*(sets[i] for i in sub))) < sum(dem[i] for i in sub):
                return False
    return True


# -- stopping-time construction -------------------------------------------------

def _support_box(fs: Sequence[LatticeFunction]) -> tuple[np.ndarray, np.ndarray] | None:
    lo, hi = None, None
    for f in fs:
        nz = np.argwhere(f.values != 0)
        if nz.size == 0:
            continue
        a = nz.min(axis=0) + np.asarray(f.lo)
        b = nz.max(axis=0) + np.asarray(f.lo) + 1
        lo = a if lo is None else np.minimum(lo, a)
        hi = b if hi is None else np.maximum(hi, b)
    return None if lo is None else (lo, hi)


def root_cube(degrees: Sequence[int], f: LatticeFunction, g: LatticeFunction, shift: Sequence[int] | None = None) -> PCube:
    """Smallest dyadic-shaped P-cube, anchored at the support corner minus ``shift``, covering supp f and supp g."""
    box = _support_box([f, g])
    n = len(degrees)
    if box is None:
        return PCube.dyadic(tuple(f.lo), 0, tuple(degrees))
    lo, hi = box
    sh = np.zeros(n, np.int64) if shift is None else np.asarray(shift, np.int64)
    if np.any(sh < 0):
        raise ValueError("grid shift must be non-negative")
    need = hi - lo + sh
    L = 0
    while any(2 ** (L * D) < e for D, e in zip(degrees, need)):
        L += 1
    return PCube.dyadic(tuple(int(v) for v in lo - sh), L, tuple(degrees))


def build_sparse_collection(f: LatticeFunction, g: LatticeFunction, sigma=DEFAULT_SIGMA,
                            shift: Sequence[int] | None = None, degrees: Sequence[int] | None = None,
                            P: PolynomialMap | None = None) -> SparseCollection:
    """Calderón–Zygmund stopping time on the anisotropic dyadic grid below a root cube.

    Below each selected Q the maximal dyadic descendants Q' with
    <f>_{Q'} > C0 <f>_Q or <g>_{Q'} > C0 <g>_Q (C0 = 2/(1 - sigma), l^1
    averages) are selected.  They cover at most (1 - sigma)|Q|, and
    E_Q = Q minus the selected children serves as witness.
    """
    sigma = _frac(sigma)
    if sigma >= 1:
        raise ValueError("the stopping time needs sigma < 1")
    degs = tuple(P.degrees if P is not None else (degrees if degrees is not None else (1,) * f.n))
    C0 = float(2 / (1 - sigma))
    root = root_cube(degs, f, g, shift)
    A = np.abs(f.embed(root.lo, root.shape))
    B = np.abs(g.embed(root.lo, root.shape))
    L0 = int(round(math.log2(root.sidelength)))
    cubes: list[PCube] = []
    parents: list[int] = []
    witness_masks: list[np.ndarray] = []
    # stack entries: (offset within root, level, parent index)
    stack = [(np.zeros(len(degs), np.int64), L0, -1)]
    while stack:
        off, L, par = stack.pop()
        shape = tuple(2 ** (L * D) for D in degs)
        sl = tuple(slice(int(o), int(o) + s) for o, s in zip(off, shape))
        a, b = A[sl], B[sl]
        idx = len(cubes)
        cubes.append(PCube.dyadic(tuple(int(r + o) for r, o in zip(root.lo, off)), L, degs))
        parents.append(par)
        ma, mb = a.mean(), b.mean()
        covered = np.zeros(shape, bool)
        chosen = []
        for l in range(L - 1, -1, -1):
            blk = tuple(2 ** (l * D) for D in degs)
            grid = tuple(s // k for s, k in zip(shape, blk))
            split = [x for pair_ in zip(grid, blk) for x in pair_]
            avg_a = a.reshape(split).mean(axis=tuple(range(1, 2 * len(degs), 2)))
            avg_b = b.reshape(split).mean(axis=tuple(range(1, 2 * len(degs), 2)))
            cov = covered.reshape(split).any(axis=tuple(range(1, 2 * len(degs), 2)))
            sel = ((avg_a > C0 * ma) | (avg_b > C0 * mb)) & ~cov
            for pos in np.argwhere(sel):
                start = pos * np.asarray(blk)
                chosen.append((start, l))
                covered[tuple(slice(int(s), int(s) + k) for s, k in zip(start, blk))] = True
        witness_masks.append(~covered)
        for start, l in chosen:
            stack.append((off + start, l, idx))
    witnesses = []
    for Q, mask in zip(cubes, witness_masks):
        pts = np.argwhere(mask) + np.asarray(Q.lo)
        witnesses.append(pts.astype(np.int64))
    return SparseCollection(cubes, sigma, witnesses, parents)


# -- ratios -------------------------------------------------------------------------

def bilinear(T, f: LatticeFunction, g: LatticeFunction) -> complex:
    """<T f, g> for an operator given as a TruncatedTransform-like object or a callable."""
    if hasattr(T, "bilinear"):
        return T.bilinear(f, g)
    return pair(T(f) if callable(T) else T.apply(f), g)


@dataclass
class RatioResult:
    ratio: float | None
    numerator: float
    denominator: float
    collection: SparseCollection
    certified: bool
    note: str = ""


def sparse_ratio(T, f: LatticeFunction, g: LatticeFunction, r: float, s: float, sigma=DEFAULT_SIGMA,
                 degrees: Sequence[int] | None = None, shift=None, verify: bool = True) -> RatioResult:
    """|<T f, g>| / Lambda^S_{r,s}(f, g) with S from the stopping time."""
    degs = degrees if degrees is not None else (T.P.degrees if hasattr(T, "P") else (1,) * f.n)
    S = build_sparse_collection(f, g, sigma, shift, degs)
    num = 0.0 if T is None else abs(bilinear(T, f, g))
    den = sparse_form(S, f, g, r, s)
    cert = verify_sparsity(S, sigma).certified if verify else True
    if den == 0:
        if num == 0:
            return RatioResult(None, num, den, S, cert, "0/0: ratio undefined")
        raise ArithmeticError("sparse form vanishes while <Tf,g> does not; the root fails to cover the supports")
    return RatioResult(num / den, num, den, S, cert)


@dataclass
class BatchSummary:
    ratios: list[float]
    max: float
    median: float
    all_certified: bool
    all_finite: bool

    @property
    def max_over_median(self) -> float:
        return self.max / self.median if self.median > 0 else math.inf


def summarize(results: Sequence[RatioResult]) -> BatchSummary:
    vals = [r.ratio for r in results if r.ratio is not None]
    arr = np.asarray(vals, float)
    return BatchSummary(vals, float(arr.max()), float(np.median(arr)), all(r.certified for r in results),
                        bool(np.all(np.isfinite(arr))))


def sparse_ratio_batch(T, pairs: Sequence[tuple[LatticeFunction, LatticeFunction]], r: float, s: float,
                       sigma=DEFAULT_SIGMA, degrees=None) -> tuple[list[RatioResult], BatchSummary]:
    res = parallel_map(lambda fg: sparse_ratio(T, fg[0], fg[1], r, s, sigma, degrees), pairs)
    return res, summarize(res)


class Convolution:
    """T_K f = K * f for a finitely supported kernel K on Z^n."""

    def __init__(self, K: LatticeFunction):
        self.K = K

    def __call__(self, f: LatticeFunction) -> LatticeFunction:
        from scipy.signal import fftconvolve

        vals = fftconvolve(f.values, self.K.values) if f.values.size * self.K.values.size > 4096 else \
            _direct_conv(f.values, self.K.values)
        return LatticeFunction(tuple(a + b for a, b in zip(f.lo, self.K.lo)), vals)

    def as_matrix(self, lo, shape) -> np.ndarray:
        m = math.prod(shape)
        pts = np.indices(shape).reshape(len(shape), -1).T
        A = np.zeros((m, m), dtype=np.complex128)
        for ki in np.argwhere(self.K.values != 0):
            v = ki + np.asarray(self.K.lo)
            src = pts - v
            ok = np.all((src >= 0) & (src < np.asarray(shape)), axis=1)
            A[np.nonzero(ok)[0], np.ravel_multi_index(tuple(src[ok].T), shape)] += self.K.values[tuple(ki)]
        return A.real if np.allclose(A.imag, 0) else A


def _direct_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(tuple(x + y - 1 for x, y in zip(a.shape, b.shape)), dtype=np.complex128)
    for idx in np.argwhere(b != 0):
        sl = tuple(slice(int(i), int(i) + s) for i, s in zip(idx, a.shape))
        out[sl] += b[tuple(idx)] * a
    return out


@dataclass
class PropCheck:
    lhs: list[float]
    rhs: float
    ratios: list[float]
    max_ratio: float
    constant: float
    all_certified: bool
    norm_estimate: float

    @property
    def passes(self) -> bool:
        return self.max_ratio <= self.constant and self.all_certified


def _dual(p: float) -> float:
    return math.inf if p == 1 else (1.0 if p == math.inf else p / (p - 1))


def check_prop_finite_support(K: LatticeFunction, Qstar: PCube, r: float, s: float,
                              trials: Sequence[tuple[LatticeFunction, LatticeFunction]], sigma=DEFAULT_SIGMA,
                              norm_box: tuple[Sequence[int], Sequence[int]] | None = None) -> PropCheck:
    """Ratios of the empirical sparse constant of T_K to |Q_*|^(1/r+1/s-1) ||T_K||_{r -> s'}."""
    if any(abs(c) > 0.5 for c in Qstar.center):
        raise ValueError("Q_* must be centered at the origin")
    nz = np.argwhere(K.values != 0) + np.asarray(K.lo)
    if nz.size and not all(Qstar.contains(p) for p in nz):
        raise ValueError("K is not supported on Q_*")
    T = Convolution(K)
    if norm_box is None:
        shape = tuple(3 * s_ for s_ in Qstar.shape)
        lo = tuple(l - s_ for l, s_ in zip(Qstar.lo, Qstar.shape))
    else:
        lo, shape = norm_box
    est = estimate_operator_norm(T, lo, shape, r, _dual(s)).value
    rhs = Qstar.cardinality ** (1 / r + 1 / s - 1) * est
    degs = Qstar.degrees
    res = parallel_map(lambda fg: sparse_ratio(T, fg[0], fg[1], r, s, sigma, degs), trials)
    lhs = [x.ratio if x.ratio is not None else 0.0 for x in res]
    ratios = [v / rhs if rhs > 0 else (0.0 if v == 0 else math.inf) for v in lhs]
    return PropCheck(lhs, rhs, ratios, max(ratios), SP_CONSTANT, all(x.certified for x in res), est)


@dataclass
class MaximalCheck:
    ratios: list[float]
    max_ratio: float
    median: float
    constant: float
    all_certified: bool

    @property
    def max_over_median(self) -> float:
        return self.max_ratio / self.median if self.median > 0 else math.inf

    @property
    def passes(self) -> bool:
        return self.max_ratio <= self.constant and self.all_certified


def maximal_operator(degrees: Sequence[int], max_level: int) -> Callable[[LatticeFunction], LatticeFunction]:
    ells = [2**l for l in range(max_level + 1)]
    return lambda f: maximal(tuple(degrees), f, ells)


def check_maximal_sparse(trials: Sequence[tuple[LatticeFunction, LatticeFunction]], degrees: Sequence[int],
                         sigma=DEFAULT_SIGMA, max_level: int | None = None) -> MaximalCheck:
    """|<M_P f, g>| / Lambda^S_{1,1}(f, g) over a batch."""
    def one(fg):
        f, g = fg
        root = root_cube(tuple(degrees), f, g)
        L = max_level if max_level is not None else int(round(math.log2(root.sidelength)))
        M = maximal_operator(degrees, L)
        return sparse_ratio(M, f, g, 1, 1, sigma, degrees)

    res = parallel_map(one, trials)
    vals = [x.ratio if x.ratio is not None else 0.0 for x in res]
    return MaximalCheck(vals, max(vals), float(np.median(vals)), MAXIMAL_CONSTANT, all(x.certified for x in res))
