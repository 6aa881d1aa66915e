"""The oscillatory integrals Phi_j(eta) = int e(P(t) . eta) K_j(t) dt.

The integrand is smooth and compactly supported inside the annulus, so a
uniform Riemann sum is spectrally accurate once the grid resolves the phase.
Steps are chosen so that the phase moves by less than 0.1 rad per cell, and
the error is estimated by comparing against the sum on every other node.

When the phase has no critical point on the annulus and resolving it would
exceed the point budget, the value is instead bounded by repeated
integration by parts, |Phi_j| <= int |D^N K_j|, which only involves
non-oscillatory integrands.  For n = 1 the bound scales exactly like
|eta|^-N and is computed once per scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..kernels import CZKernel, kj_eval
from ..poly_map import PolynomialMap
from ..transform import BudgetExceeded

ATOL = 1e-8
MAX_POINTS = 1 << 23
_BLOCK = 1 << 22
_CHEAP = 1 << 16  # above this many nodes, try the integration-by-parts bound first


@dataclass(frozen=True)
class PhiValue:
    value: complex
    error: float
    points: int
    method: str


def _base_level(d: int) -> int:
    return 8 if d == 1 else 7


def _level_for(P: PolynomialMap, j: int, eta: np.ndarray) -> int:
    """Smallest p with step 2^(j-p) keeping the phase increment below 0.1 rad."""
    G = P.phase_gradient_bound(eta, 2.0 ** (j + 1))
    p = _base_level(P.d)
    if G > 0:
        need = 2.0**j * 2 * math.pi * G / 0.1
        p = max(p, math.ceil(math.log2(need)))
    return p


def _points_for(d: int, p: int) -> int:
    return 3 * 2**p if d == 1 else (4 * 2**p + 1) ** 2


@lru_cache(maxsize=64)
def _nodes(P: PolynomialMap, K: CZKernel, j: int, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature nodes, weights h^d K_j and a mask of the coarse (every other) nodes."""
    h = 2.0 ** (j - p)
    if P.d == 1:
        m = 3 * 2 ** (p - 1)
        idx = np.arange(1, m)
        pos = 2.0 ** (j - 1) + idx * h
        t = np.concatenate([-pos[::-1], pos]).reshape(-1, 1)
        coarse = np.concatenate([(idx % 2 == 0)[::-1], idx % 2 == 0])
    elif P.d == 2:
        m = 2 ** (p + 1)
        ax = np.arange(-m, m + 1)
        I, J = np.meshgrid(ax, ax, indexing="ij")
        t = np.column_stack([I.ravel(), J.ravel()]) * h
        r = np.linalg.norm(t, axis=1)
        keep = (r > 2.0 ** (j - 1)) & (r < 2.0 ** (j + 1))
        t = t[keep]
        coarse = ((I.ravel() % 2 == 0) & (J.ravel() % 2 == 0))[keep]
    else:
        raise NotImplementedError("Phi_j quadrature is implemented for d <= 2")
    w = kj_eval(K, j, t) * h**P.d
    return P.evaluate_real(t), w, coarse


def _trapezoid(P: PolynomialMap, K: CZKernel, j: int, p: int, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Pt, w, coarse = _nodes(P, K, j, p)
    out = np.empty(etas.shape[0], dtype=np.complex128)
    err = np.empty(etas.shape[0])
    chunk = max(1, _BLOCK // max(1, Pt.shape[0]))
    for s in range(0, etas.shape[0], chunk):
        E = etas[s:s + chunk]
        ph = np.exp(2j * np.pi * (Pt @ E.T))
        fine = w @ ph
        crude = (w[coarse] @ ph[coarse]) * 2**P.d
        out[s:s + chunk] = fine
        err[s:s + chunk] = np.abs(fine - crude)
    return out, err


@lru_cache(maxsize=64)
def _ibp_profile(P: PolynomialMap, K: CZKernel, j: int, order: int = 4) -> tuple[float, ...] | None:
    """For d = n = 1: B_N = (2 pi)^-N int |(d/dt o 1/P')^N K_j| for N = 1..order."""
    if P.d != 1 or P.n != 1:
        return None
    bounds = [0.0] * order
    for sign in (-1.0, 1.0):
        t = sign * np.linspace(2.0 ** (j - 1), 2.0 ** (j + 1), 1 << 15)
        dP = np.gradient(P.evaluate_real(t[:, None])[:, 0], t)
        if np.any(np.abs(dP) < 1e-300) or np.any(np.sign(dP) != np.sign(dP[len(dP) // 2])):
            return None
        g = np.zeros_like(t)
        inner = slice(1, -1)
        g[inner] = kj_eval(K, j, t[inner])
        for N in range(order):
            g = np.gradient(g / dP, t)
            bounds[N] += float(np.trapezoid(np.abs(g), np.abs(t))) / (2 * math.pi) ** (N + 1)
    return tuple(2.0 * b for b in bounds)  # factor 2: slack for the finite differences


def _ibp_bound(P: PolynomialMap, K: CZKernel, j: int, eta: np.ndarray) -> float | None:
    prof = _ibp_profile(P, K, j)
    if prof is None:
        return None
    z = abs(float(eta[0]))
    if z == 0:
        return None
    return min(b / z ** (N + 1) for N, b in enumerate(prof))


def phi_j_many(P: PolynomialMap, K: CZKernel, j: int, etas: np.ndarray, atol: float = ATOL,
               max_points: int = MAX_POINTS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Phi_j at many eta (shape (m, n)); returns values, error estimates and node counts."""
    if j < 0:
        raise ValueError("scale j must be non-negative")
    if K.d != P.d:
        raise ValueError("kernel dimension does not match the domain of P")
    etas = np.asarray(etas, dtype=np.float64).reshape(-1, P.n)
    m = etas.shape[0]
    vals = np.zeros(m, dtype=np.complex128)
    errs = np.full(m, np.inf)
    pts = np.zeros(m, dtype=np.int64)
    if m == 0:
        return vals, errs, pts
    uniq, inv = np.unique(etas, axis=0, return_inverse=True)
    inv = inv.ravel()
    levels = np.array([_level_for(P, j, e) for e in uniq])
    u_vals = np.zeros(uniq.shape[0], dtype=np.complex128)
    u_errs = np.full(uniq.shape[0], np.inf)
    u_pts = np.zeros(uniq.shape[0], dtype=np.int64)
    pending = np.ones(uniq.shape[0], dtype=bool)

    for i in range(uniq.shape[0]):
        if _points_for(P.d, levels[i]) > _CHEAP:
            b = _ibp_bound(P, K, j, uniq[i])
            if b is not None and b <= atol:
                u_vals[i], u_errs[i], pending[i] = 0.0, b, False
            elif _points_for(P.d, levels[i]) > max_points:
                raise BudgetExceeded(
                    f"Phi_{j} at eta={uniq[i].tolist()} needs about {_points_for(P.d, levels[i])} "
                    f"quadrature nodes (budget {max_points})"
                )

    while pending.any():
        for p in np.unique(levels[pending]):
            sel = np.nonzero(pending & (levels == p))[0]
            v, e = _trapezoid(P, K, j, int(p), uniq[sel])
            u_vals[sel], u_errs[sel], u_pts[sel] = v, e, _points_for(P.d, int(p))
            ok = e <= atol
            pending[sel[ok]] = False
            levels[sel[~ok]] += 1
        over = pending & np.array([_points_for(P.d, l) > max_points for l in levels])
        if over.any():
            i = int(np.nonzero(over)[0][0])
            raise BudgetExceeded(
                f"Phi_{j} at eta={uniq[i].tolist()} did not reach error {atol:g} within "
                f"{max_points} nodes (estimate {u_errs[i]:.3g})"
            )
    vals, errs, pts = u_vals[inv], u_errs[inv], u_pts[inv]
    return vals, errs, pts


def phi_j(P: PolynomialMap, K: CZKernel, j: int, eta, atol: float = ATOL, max_points: int = MAX_POINTS) -> PhiValue:
    v, e, n = phi_j_many(P, K, j, np.asarray(eta, dtype=np.float64).reshape(1, P.n), atol, max_points)
    method = "ibp-bound" if n[0] == 0 else "trapezoid"
    return PhiValue(complex(v[0]), float(e[0]), int(n[0]), method)


def riemann_reference(P: PolynomialMap, K: CZKernel, j: int, eta, step: float) -> complex:
    """Plain Riemann sum of the integrand on the grid step * Z^d (test oracle)."""
    eta = np.asarray(eta, dtype=np.float64).reshape(P.n)
    R = 2.0 ** (j + 1)
    k = int(math.ceil(R / step))
    ax = np.arange(-k, k + 1) * step
    if P.d == 1:
        t = ax.reshape(-1, 1)
    else:
        t = np.stack(np.meshgrid(*([ax] * P.d), indexing="ij"), axis=-1).reshape(-1, P.d)
    r = np.linalg.norm(t, axis=1)
    t = t[(r > 2.0 ** (j - 1)) & (r < R)]
    w = kj_eval(K, j, t) * step**P.d
    total = np.zeros(2)
    for s in range(0, t.shape[0], _BLOCK):
        ph = 2 * np.pi * (P.evaluate_real(t[s:s + _BLOCK]) @ eta)
        total += [math.fsum(w[s:s + _BLOCK] * np.cos(ph)), math.fsum(w[s:s + _BLOCK] * np.sin(ph))]
    return complex(total[0], total[1])
