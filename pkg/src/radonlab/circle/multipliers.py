"""m_j, its major-arc main terms L and the error E_j = m_j - L_j.

Frequencies are represented as rational centers plus small real offsets,
xi = c/q + eta.  The rational part of every phase P(y) . xi is then reduced
modulo q in integer arithmetic, so no precision is lost at large |P(y)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import sparse

from ..kernels import CZKernel, kj_eval, kj_l1_integral
from ..lattice_fn import LatticeFunction, SampledMultiplier, idft
from ..poly_map import PolynomialMap, rho_many
from ..threads import fft_workers
from ..transform import DEFAULT_BUDGET, AnnulusTable, BudgetExceeded, TruncatedTransform
from .arcs import ArcParameters, chi_k, chi_radius, major_arc_contains
from .oscillatory import phi_j_many
from .weyl import ReducedFraction, enumerate_fractions, weyl_sum


class InvariantViolation(RuntimeError):
    """Two fractions of one shell are simultaneously active at a frequency."""


class UnderResolved(ValueError):
    """A frequency grid is too coarse to resolve the narrowest major arc."""


# -- frequency grids ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ArcGrid:
    """Nodes c_f/q_f + eta_m for every center f and offset m (values are indexed (f, m))."""

    center_num: np.ndarray
    center_den: np.ndarray
    offsets: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        num = np.asarray(self.center_num, dtype=np.int64)
        num = num.reshape(num.shape[0], -1) if num.ndim else num.reshape(1, 1)
        den = np.asarray(self.center_den, dtype=np.int64).reshape(-1)
        off = np.asarray(self.offsets, dtype=np.float64)
        off = off.reshape(off.shape[0], -1) if off.ndim else off.reshape(1, 1)
        if num.shape[0] != den.shape[0]:
            raise ValueError("need one denominator per center")
        if num.shape[1] != off.shape[1]:
            raise ValueError("centers and offsets live in different dimensions")
        if np.any(den < 1):
            raise ValueError("denominators must be positive")
        object.__setattr__(self, "center_num", num % den[:, None])
        object.__setattr__(self, "center_den", den)
        object.__setattr__(self, "offsets", off)

    @property
    def n(self) -> int:
        return self.offsets.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.center_den.shape[0], self.offsets.shape[0])

    @property
    def step(self) -> float:
        """Spacing of the offset lattice (largest per-axis gap between sorted offsets)."""
        gaps = []
        for i in range(self.n):
            u = np.unique(self.offsets[:, i])
            if u.size > 1:
                gaps.append(float(np.max(np.diff(u))))
        return max(gaps) if gaps else 0.0

    def xi(self) -> np.ndarray:
        """Approximate nodes in [0,1)^n as floats, shape (F, M, n)."""
        c = self.center_num / self.center_den[:, None]
        x = c[:, None, :] + self.offsets[None, :, :]
        return x - np.floor(x)

    @classmethod
    def at_fractions(cls, fractions: Iterable[ReducedFraction], offsets: np.ndarray, label: str = "") -> ArcGrid:
        fr = list(fractions)
        return cls(np.array([f.a for f in fr]), np.array([f.q for f in fr]), offsets, label)

    @classmethod
    def windows(cls, n: int, q_max: int, half_width: float, step: float) -> ArcGrid:
        """Offset windows [-half_width, half_width]^n around every reduced a/q with q <= q_max."""
        ax = np.arange(-half_width, half_width + step / 2, step)
        off = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
        return cls.at_fractions(enumerate_fractions(n, q_max), off, f"windows(q<={q_max})")


@dataclass(frozen=True)
class UniformGrid:
    """The grid {0, 1/N, ..., (N-1)/N}^n."""

    N: int
    n: int

    @property
    def step(self) -> float:
        return 1.0 / self.N

    def as_arc_grid(self) -> ArcGrid:
        k = np.indices((self.N,) * self.n).reshape(self.n, -1).T
        return ArcGrid(k, np.full(k.shape[0], self.N), np.zeros((1, self.n)), f"uniform(N={self.N})")


# -- m_j -----------------------------------------------------------------------

def annulus_table(P: PolynomialMap, K: CZKernel, j: int, budget: int = DEFAULT_BUDGET) -> AnnulusTable:
    return AnnulusTable.build(P, lambda y: kj_eval(K, j, y), j, budget)


def m_j(P: PolynomialMap, K: CZKernel, j: int, N: int | None = None, budget: int = DEFAULT_BUDGET) -> SampledMultiplier:
    """m_j(xi) = sum_y e(P(y) . xi) K_j(y) sampled on an alias-free uniform grid."""
    if j < 0:
        raise ValueError("scale j must be non-negative")
    T = TruncatedTransform(P, [annulus_table(P, K, j, budget)], K, f"m_{j}")
    top = int(np.abs(T.shifts).max()) if T.shifts.size else 0
    if N is None:
        N = sfft.next_fast_len(2 * top + 2)
    if N**P.n > budget:
        raise BudgetExceeded(f"grid of {N}^{P.n} nodes exceeds budget {budget}")
    mult = T.multiplier(N)
    mult.meta.update({"j": j, "max_frequency": top})
    return mult


def _residue_phases(P: PolynomialMap, pts: np.ndarray, q: int) -> np.ndarray:
    """P(y) mod q for integer points (m, d), exact for any size of y."""
    red = np.asarray(pts, dtype=np.int64) % q
    return P.evaluate_many(red) % q if P.magnitude_bound(q) < 2**62 else np.array(
        [[v % q for v in P.evaluate(tuple(int(x) for x in r))] for r in red], dtype=np.int64)


def m_j_on_arc_grid(table: AnnulusTable, P: PolynomialMap, grid: ArcGrid) -> np.ndarray:
    """m_j at every node of the grid via residue classes; returns shape (F, M)."""
    F, M = grid.shape
    out = np.zeros((F, M), dtype=np.complex128)
    V = table.weights[:, None] * np.exp(2j * np.pi * (table.images.astype(np.float64) @ grid.offsets.T))
    for q in np.unique(grid.center_den):
        q = int(q)
        rows = np.nonzero(grid.center_den == q)[0]
        if q == 1:
            out[rows] = V.sum(axis=0)[None, :]
            continue
        cls_idx = np.ravel_multi_index(tuple((table.points % q).T), (q,) * P.d)
        ind = sparse.csr_matrix((np.ones(cls_idx.size), (cls_idx, np.arange(cls_idx.size))), shape=(q**P.d, cls_idx.size))
        G = ind @ V
        res = np.indices((q,) * P.d).reshape(P.d, -1).T
        Pr = _residue_phases(P, res, q)
        ph = (grid.center_num[rows] % q) @ Pr.T % q
        out[rows] = np.exp(2j * np.pi * ph / q) @ G
    return out


# -- main terms -----------------------------------------------------------------

@dataclass(frozen=True)
class MainTermSpec:
    """Which L to evaluate: L_{j,k}, L_j = sum_{k <= j delta'} L_{j,k}, or the tail sum over j."""

    kind: str
    k: int | None = None
    j_max: int | None = None

    @classmethod
    def Ljk(cls, k: int) -> MainTermSpec:
        return cls("Ljk", k)

    @classmethod
    def Lj(cls) -> MainTermSpec:
        return cls("Lj")

    @classmethod
    def Lk_tail(cls, k: int, j_max: int) -> MainTermSpec:
        return cls("Lk_tail", k, j_max)


def _shell_denominators(k: int) -> range:
    return range(2 ** (k - 1), 2**k)


@dataclass
class ActiveSet:
    """Active (node, fraction) pairs: node indices into the flattened grid and the offsets xi - a/q."""

    node: np.ndarray
    q: np.ndarray
    a: np.ndarray
    zeta: np.ndarray
    k: np.ndarray


def active_fractions(grid: ArcGrid, params: ArcParameters, shells: Sequence[int]) -> ActiveSet:
    """All (node, a/q) with a/q in one of the shells and xi - a/q inside supp chi_k.

    Raises InvariantViolation when one node sees two fractions of the same shell.
    """
    F, M = grid.shape
    n = grid.n
    nodes, qs, As, zetas, ks = [], [], [], [], []
    qc = grid.center_den[:, None]
    for k in shells:
        radius = chi_radius(params, k)
        seen = np.zeros(F * M, dtype=np.int64)
        for qp in _shell_denominators(k):
            # nearest numerator per coordinate: a' = round(xi * q')
            a_parts, z_parts = [], []
            for i in range(n):
                prod = grid.center_num[:, i:i + 1] * qp
                base = prod // qc
                frac = (prod % qc) / qc + grid.offsets[None, :, i] * qp
                a_i = base + np.round(frac).astype(np.int64)
                num = prod - a_i * qc
                z_parts.append(num / (qc * qp) + grid.offsets[None, :, i])
                a_parts.append(a_i % qp)
            z = np.stack(z_parts, axis=-1)
            hit = np.linalg.norm(z, axis=-1) < radius
            if not hit.any():
                continue
            A = np.stack(a_parts, axis=-1)
            g = np.full(hit.shape, qp)
            for i in range(n):
                g = np.gcd(g, A[..., i])
            hit &= g == 1
            if not hit.any():
                continue
            f_idx, m_idx = np.nonzero(hit)
            flat = f_idx * M + m_idx
            seen[flat] += 1
            nodes.append(flat)
            qs.append(np.full(flat.size, qp))
            As.append(A[f_idx, m_idx])
            zetas.append(z[f_idx, m_idx])
            ks.append(np.full(flat.size, k))
        if np.any(seen > 1):
            bad = int(np.nonzero(seen > 1)[0][0])
            raise InvariantViolation(
                f"node {bad} sees {int(seen[bad])} active fractions of shell k={k}; cutoffs overlap"
            )
    if not nodes:
        return ActiveSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, n), np.int64),
                         np.zeros((0, n)), np.zeros(0, np.int64))
    return ActiveSet(np.concatenate(nodes), np.concatenate(qs), np.concatenate(As),
                     np.concatenate(zetas), np.concatenate(ks))


def _weyl_cache(P: PolynomialMap, q: np.ndarray, a: np.ndarray) -> np.ndarray:
    cache: dict[tuple, complex] = {}
    out = np.empty(q.size, dtype=np.complex128)
    for i in range(q.size):
        key = (int(q[i]), tuple(int(v) for v in a[i]))
        if key not in cache:
            cache[key] = weyl_sum(P, ReducedFraction(key[0], key[1]))
        out[i] = cache[key]
    return out


def _L_single_scale(P, K, params, j, grid: ArcGrid, shells) -> tuple[np.ndarray, ActiveSet]:
    F, M = grid.shape
    act = active_fractions(grid, params, list(shells))
    out = np.zeros(F * M, dtype=np.complex128)
    if act.node.size:
        S = _weyl_cache(P, act.q, act.a)
        phi, _, _ = phi_j_many(P, K, j, act.zeta)
        c = np.empty(act.node.size)
        for k in np.unique(act.k):
            sel = act.k == k
            c[sel] = chi_k(params, int(k), act.zeta[sel])
        np.add.at(out, act.node, S * phi * c)
    return out.reshape(F, M), act


def main_term_L(P: PolynomialMap, K: CZKernel, params: ArcParameters, j: int, variant: MainTermSpec,
                grid: ArcGrid | UniformGrid) -> SampledMultiplier | np.ndarray:
    """Evaluate L_{j,k}, L_j or the truncated tail L^(k) on a grid.

    Uniform grids return a SampledMultiplier; arc grids return an (F, M) array.
    """
    arc = grid.as_arc_grid() if isinstance(grid, UniformGrid) else grid
    if variant.kind == "Ljk":
        vals, _ = _L_single_scale(P, K, params, j, arc, [variant.k])
    elif variant.kind == "Lj":
        kmax = params.k_max(j)
        vals = np.zeros(arc.shape, dtype=np.complex128) if kmax < 1 else _L_single_scale(
            P, K, params, j, arc, range(1, kmax + 1))[0]
    elif variant.kind == "Lk_tail":
        k = variant.k
        j0 = math.ceil(k / params.delta_prime - 1e-12)
        vals = np.zeros(arc.shape, dtype=np.complex128)
        for jj in range(j0, variant.j_max + 1):
            vals += _L_single_scale(P, K, params, jj, arc, [k])[0]
    else:
        raise ValueError(f"unknown main-term variant {variant.kind!r}")
    if isinstance(grid, UniformGrid):
        return SampledMultiplier(grid.N, vals.reshape((grid.N,) * grid.n), meta={"variant": variant.kind, "j": j})
    return vals


# -- E_j ----------------------------------------------------------------------------

@dataclass
class ErrorResult:
    j: int
    m: np.ndarray
    L: np.ndarray
    E: np.ndarray
    sup: float
    argmax: tuple
    regime: str
    active_count: int = 0
    meta: dict = field(default_factory=dict)


def required_step(P: PolynomialMap, params: ArcParameters, j: int) -> float:
    return 2.0 ** (-(P.degree - 1) * j - params.delta * j) / 4


def error_E_j(P: PolynomialMap, K: CZKernel, params: ArcParameters, j: int, grid: ArcGrid | UniformGrid,
              budget: int = DEFAULT_BUDGET) -> ErrorResult:
    """E_j = m_j - L_j on the grid, with its sup norm and the node attaining it."""
    need = required_step(P, params, j)
    if not 0 < grid.step <= need:
        raise UnderResolved(f"grid step {grid.step:.3g} does not resolve the major arcs at j={j}; "
                            f"need step <= {need:.3g}")
    table = annulus_table(P, K, j, budget)
    if isinstance(grid, UniformGrid):
        m = m_j(P, K, j, grid.N, budget).samples.reshape(-1, 1)
        arc = grid.as_arc_grid()
    else:
        arc = grid
        m = m_j_on_arc_grid(table, P, arc)
    kmax = params.k_max(j)
    if kmax >= 1:
        L, act = _L_single_scale(P, K, params, j, arc, range(1, kmax + 1))
        count = int(act.node.size)
    else:
        L, count = np.zeros_like(m), 0
    E = m - L
    i = np.unravel_index(int(np.argmax(np.abs(E))), E.shape)
    if isinstance(grid, UniformGrid):
        node = tuple(int(v) for v in np.unravel_index(int(i[0]), (grid.N,) * grid.n))
    else:
        node = (tuple(int(v) for v in arc.center_num[i[0]]), int(arc.center_den[i[0]]),
                tuple(float(v) for v in arc.offsets[i[1]]))
    return ErrorResult(j, m, L, E, float(np.abs(E[i])), node, params.regime, count)


# -- decay measurements ----------------------------------------------------------------

@dataclass
class ApproximationReport:
    max_error: float
    errors: np.ndarray
    flagged: bool
    note: str = ""


def approximation_error(P: PolynomialMap, K: CZKernel, params: ArcParameters, j: int, af: ReducedFraction,
                        offsets: np.ndarray, budget: int = DEFAULT_BUDGET) -> ApproximationReport:
    """max |m_j(a/q + eta) - S(a/q) Phi_j(eta)| over offsets eta that stay in the major arc.

    Samples are supplied as offsets from a/q so the rational part stays exact.
    """
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, P.n)
    for eta in offsets:
        if not major_arc_contains(P, params, j, af, [float(v) + a / af.q for v, a in zip(eta, af.a)]) or \
                np.any(np.abs(eta) > params.widths(P, j)):
            raise ValueError(f"offset {eta.tolist()} lies outside the major arc at scale j={j}")
    flagged, note = False, ""
    if af.q > 2.0 ** (params.delta_prime * j):
        if params.regime == "paper":
            raise ValueError(f"q={af.q} exceeds 2^(delta' j) at j={j}")
        flagged, note = True, f"q={af.q} > 2^(delta' j); hypothesis relaxed in exploratory mode"
    table = annulus_table(P, K, j, budget)
    grid = ArcGrid.at_fractions([af], offsets)
    m = m_j_on_arc_grid(table, P, grid)[0]
    phi, _, _ = phi_j_many(P, K, j, offsets)
    err = np.abs(m - weyl_sum(P, af) * phi)
    return ApproximationReport(float(err.max()), err, flagged, note)


@dataclass
class OffArcReport:
    max_modulus: float
    ratio: float
    prediction: float
    l1_ceiling: float


def off_arc_phi_bound_check(P: PolynomialMap, K: CZKernel, params: ArcParameters, j: int, af: ReducedFraction,
                            offsets: np.ndarray) -> OffArcReport:
    """max |Phi_j(xi - a/q)| over offsets outside the arc, against 2^(-(1-delta) j / D)."""
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, P.n)
    w = params.widths(P, j)
    for eta in offsets:
        if np.all(np.abs(eta) <= w):
            raise ValueError(f"offset {eta.tolist()} lies inside the major arc")
    phi, _, _ = phi_j_many(P, K, j, offsets)
    mx = float(np.abs(phi).max())
    pred = 2.0 ** (-(1 - params.delta) * j / P.degree)
    return OffArcReport(mx, mx / pred, pred, kj_l1_integral(K, j))


@dataclass
class MinorKernelReport:
    kernel: LatticeFunction
    tail_l1: float
    sup: float
    prediction: float
    rho_cut: float
    N: int
    converged: bool
    exact: bool
    total: complex
    E0: complex
    history: list = field(default_factory=list)


def minor_arc_kernel(P: PolynomialMap, K: CZKernel, params: ArcParameters, j: int, N: int | None = None,
                     eps_prime: float = 0.1, rho_max: float | None = None, max_refinements: int = 3,
                     budget: int = DEFAULT_BUDGET) -> MinorKernelReport:
    """K_j = F^-1[E_j] on a uniform grid, with its l^1 tail outside {rho <= 2^((D+1) j)}.

    When no main term is active the kernel is the exact pushforward of K_j
    and no refinement is needed; otherwise N is doubled until consecutive
    tails agree to 1%.
    """
    table = annulus_table(P, K, j, budget)
    top = int(np.abs(table.images).max()) if table.images.size else 0
    N = N or sfft.next_fast_len(2 * top + 2)
    exact = params.k_max(j) < 1
    rho_cut = 2.0 ** ((P.degree + 1) * j)
    history: list[tuple[int, float]] = []
    converged = exact
    while True:
        if N**P.n > budget:
            raise BudgetExceeded(f"grid {N}^{P.n} exceeds budget {budget}")
        res = error_E_j(P, K, params, j, UniformGrid(N, P.n), budget) if not exact else None
        if exact:
            samples = m_j(P, K, j, N, budget).samples
        else:
            samples = res.E.reshape((N,) * P.n)
        kern = idft(SampledMultiplier(N, samples))
        pts = np.indices(kern.shape).reshape(P.n, -1).T + np.asarray(kern.lo)
        rr = rho_many(P.degrees, pts)
        vals = kern.values.ravel()
        tail = float(math.fsum(np.abs(vals[rr > rho_cut])))
        history.append((N, tail))
        if exact or len(history) > max_refinements:
            break
        if len(history) >= 2:
            prev = history[-2][1]
            if abs(tail - prev) <= 0.01 * max(prev, 1e-300) or (tail == 0 and prev == 0):
                converged = True
                break
        N *= 2
    if rho_max is not None:
        keep = rr <= rho_max
        if not keep.all():
            vals = np.where(keep, vals, 0)
            kern = LatticeFunction(kern.lo, vals.reshape(kern.shape))
    total = complex(math.fsum(kern.values.real.ravel()), math.fsum(kern.values.imag.ravel()))
    return MinorKernelReport(kern, tail, float(np.abs(kern.values).max()), 2.0 ** (-eps_prime * j), rho_cut, N,
                             converged, exact, total, complex(samples.ravel()[0]), history)
