"""Calderón–Zygmund kernels, the dyadic bump psi, and the pieces K_j = psi(2^-j .) K."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

ArrayFn = Callable[[np.ndarray], np.ndarray]


def smooth_step_base(t: np.ndarray) -> np.ndarray:
    """phi(t) = exp(-1/t) for t > 0, else 0."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t: np.ndarray) -> np.ndarray:
    """h = phi(t) / (phi(t) + phi(1-t)): 0 for t <= 0, 1 for t >= 1, smooth in between."""
    a = smooth_step_base(t)
    b = smooth_step_base(1.0 - np.asarray(t, dtype=np.float64))
    return a / (a + b)


def theta(x: np.ndarray) -> np.ndarray:
    """Radial plateau: 1 on |x| <= 1, 0 on |x| >= 2.  Accepts radii or (m, d) points."""
    r = _radius(x)
    return smooth_step(2.0 - r)


def psi(x: np.ndarray) -> np.ndarray:
    """Dyadic bump theta(x) - theta(2x), supported in 1/2 <= |x| <= 2."""
    r = _radius(x)
    return theta(r) - theta(2.0 * r)


def _radius(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.abs(x) if x.ndim <= 1 else np.linalg.norm(x, axis=-1)


@dataclass(frozen=True)
class DyadicBump:
    """The fixed smooth profile psi used for every dyadic decomposition."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return psi(x)

    def partition_sum(self, x: np.ndarray, j_lo: int = -40, j_hi: int = 80) -> np.ndarray:
        r = _radius(x)
        return sum(psi(r * 2.0 ** (-j)) for j in range(j_lo, j_hi + 1))


PSI = DyadicBump()


@dataclass(frozen=True)
class CZKernel:
    """A kernel on R^d \\ {0}, already multiplied by ``scale``.

    ``raw`` and ``raw_grad`` act on arrays of shape (m, d).
    """

    name: str
    d: int
    raw: ArrayFn = field(repr=False, compare=False)
    raw_grad: ArrayFn = field(repr=False, compare=False)
    params: tuple = ()
    scale: float = 1.0
    odd: bool = False

    @property
    def descriptor(self) -> str:
        args = ",".join(str(p) for p in self.params)
        return f"{self.name}({args})*{self.scale:g}" if args else f"{self.name}*{self.scale:g}"

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = _as_points(y, self.d)
        if np.any(np.all(y == 0, axis=1)):
            raise ValueError("kernel is not defined at y = 0")
        return self.scale * self.raw(y)

    def grad(self, y: np.ndarray) -> np.ndarray:
        y = _as_points(y, self.d)
        return self.scale * self.raw_grad(y)

    def rescaled(self, factor: float) -> CZKernel:
        return CZKernel(self.name, self.d, self.raw, self.raw_grad, self.params, self.scale * factor, self.odd)


def _as_points(y: np.ndarray, d: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if d == 1 and y.ndim <= 1:
        return y.reshape(-1, 1)
    return y.reshape(-1, d)


def _signed_power(p: float) -> tuple[ArrayFn, ArrayFn]:
    def k(y):
        t = y[:, 0]
        return np.sign(t) * np.abs(t) ** (-p)

    def dk(y):
        t = y[:, 0]
        return (-p * np.abs(t) ** (-p - 1)).reshape(-1, 1)

    return k, dk


def _riesz(i: int, d: int) -> tuple[ArrayFn, ArrayFn]:
    def k(y):
        r = np.linalg.norm(y, axis=1)
        return y[:, i] / r ** (d + 1)

    def dk(y):
        r = np.linalg.norm(y, axis=1)
        g = -(d + 1) * y[:, i, None] * y / r[:, None] ** (d + 3)
        g[:, i] += 1.0 / r ** (d + 1)
        return g

    return k, dk


def make_kernel(name: str, *params, normalize: bool = True) -> CZKernel:
    """Build a registry kernel; by default rescaled to satisfy the unit size/gradient bound."""
    if name == "one_over_y":
        k, dk = _signed_power(1.0)
        K = CZKernel("one_over_y", 1, k, dk, (), 1.0, True)
    elif name == "sign_y_over_abs_pow":
        (p,) = params or (1.0,)
        p = float(p)
        if p < 1:
            raise ValueError("sign_y_over_abs_pow needs p >= 1 to meet the size bound at infinity")
        k, dk = _signed_power(p)
        K = CZKernel("sign_y_over_abs_pow", 1, k, dk, (p,), 1.0, True)
    elif name == "riesz_component":
        i, d = (tuple(params) + (0, 2)[len(params):])[:2]
        i, d = int(i), int(d)
        if not 0 <= i < d:
            raise ValueError(f"component index {i} out of range for d={d}")
        k, dk = _riesz(i, d)
        K = CZKernel("riesz_component", d, k, dk, (i, d), 1.0, True)
    else:
        raise KeyError(f"unknown kernel {name!r}; known: {sorted(KERNEL_REGISTRY)}")
    if normalize:
        factor = verify_cz_bounds(K).normalization_factor
        if factor < 1.0:
            K = K.rescaled(factor)
    return K


KERNEL_REGISTRY = {
    "one_over_y": "K(y) = 1/y on R (d=1); normalized to 1/(2y)",
    "sign_y_over_abs_pow": "K(y) = sign(y)/|y|^p on R, p >= 1; normalized by 1/(1+p)",
    "riesz_component": "K(y) = y_i/|y|^(d+1) on R^d; normalized by 1/(1+d)",
}


def kernel_from_spec(spec: str | dict) -> CZKernel:
    """Parse 'one_over_y', 'sign_y_over_abs_pow(3)', 'riesz_component(0,2)' or a dict form."""
    if isinstance(spec, dict):
        return make_kernel(spec["name"], *spec.get("params", []))
    spec = spec.strip()
    if "(" in spec:
        name, rest = spec.split("(", 1)
        args = [a for a in rest.rstrip(")").split(",") if a.strip()]
        return make_kernel(name.strip(), *[float(a) if "." in a else int(a) for a in args])
    return make_kernel(spec)


def kj_eval(K: CZKernel, j: int, y: np.ndarray) -> np.ndarray:
    """K_j(y) = psi(2^-j y) K(y), vectorized over points (m, d) or scalars for d = 1."""
    pts = _as_points(y, K.d)
    if np.any(np.all(pts == 0, axis=1)):
        raise ValueError("K_j is not evaluated at y = 0")
    r = np.linalg.norm(pts, axis=1)
    out = np.zeros(pts.shape[0])
    live = (r > 2.0 ** (j - 1)) & (r < 2.0 ** (j + 1))
    if live.any():
        out[live] = psi(r[live] * 2.0 ** (-j)) * K(pts[live])
    return out


def _sample_points(d: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    radii = np.geomspace(1.0, 1e4, max(8, budget // (4 * d)))
    if d == 1:
        return np.concatenate([radii, -radii]).reshape(-1, 1)
    axes = [s * np.eye(d)[i] for i in range(d) for s in (1.0, -1.0)]
    dirs = np.array(axes + list(rng.normal(size=(max(8, budget // len(radii)), d))))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)


def cancellation_integral(K: CZKernel, lam: float) -> float:
    """int_{1 <= |y| <= lam} K(y) dy by adaptive quadrature (d = 1) or in polar coordinates (d = 2)."""
    if K.d == 1:
        f = lambda t: float(K(np.array([t]))[0])  # noqa: E731
        a = integrate.quad(f, 1.0, lam, limit=200)[0]
        b = integrate.quad(f, -lam, -1.0, limit=200)[0]
        return a + b
    if K.d == 2:
        def inner(r: float) -> float:
            th = np.linspace(0.0, 2 * np.pi, 257)[:-1]
            pts = r * np.column_stack([np.cos(th), np.sin(th)])
            return float(np.mean(K(pts)) * 2 * np.pi * r)

        return integrate.quad(inner, 1.0, lam, limit=200)[0]
    raise NotImplementedError("cancellation quadrature is implemented for d <= 2")


@dataclass(frozen=True)
class CZReport:
    size_gradient_max: float
    size_gradient_argmax: tuple[float, ...]
    cancellation_max: float
    cancellation_argmax: float

    @property
    def normalization_factor(self) -> float:
        worst = max(self.size_gradient_max, self.cancellation_max)
        return 1.0 if worst <= 1.0 else 1.0 / worst

    @property
    def passes(self) -> bool:
        return self.size_gradient_max <= 1.0 + 1e-12 and self.cancellation_max <= 1.0 + 1e-9


def verify_cz_bounds(K: CZKernel, budget: int = 400, seed: int = 0) -> CZReport:
    """Sampled maxima of |y|^d|K| + |y|^(d+1)|grad K| and of the truncated integrals."""
    rng = np.random.default_rng(seed)
    pts = _sample_points(K.d, budget, rng)
    r = np.linalg.norm(pts, axis=1)
    val = r**K.d * np.abs(K(pts)) + r ** (K.d + 1) * np.linalg.norm(K.grad(pts), axis=1)
    i = int(np.argmax(val))
    lams = np.geomspace(1.0, 1e3, 9)
    if K.odd:
        canc = np.zeros_like(lams)
    else:
        canc = np.array([abs(cancellation_integral(K, lam)) for lam in lams])
    c = int(np.argmax(canc))
    return CZReport(float(val[i]), tuple(map(float, pts[i])), float(canc[c]), float(lams[c]))


def kj_l1_integral(K: CZKernel, j: int) -> float:
    """int_{R^d} |K_j(t)| dt."""
    lo, hi = 2.0 ** (j - 1), 2.0 ** (j + 1)
    if K.d == 1:
        f = lambda t: float(abs(kj_eval(K, j, np.array([t]))[0]))  # noqa: E731
        return integrate.quad(f, lo, hi, limit=200)[0] + integrate.quad(f, -hi, -lo, limit=200)[0]
    if K.d == 2:
        th = np.linspace(0.0, 2 * np.pi, 513)[:-1]
        circle = np.column_stack([np.cos(th), np.sin(th)])

        def inner(r: float) -> float:
            return float(np.mean(np.abs(kj_eval(K, j, r * circle))) * 2 * np.pi * r)

        return integrate.quad(inner, lo, hi, limit=200)[0]
    raise NotImplementedError("implemented for d <= 2")


def lattice_annulus(d: int, j: int) -> np.ndarray:
    """Lattice points y != 0 with 2^(j-1) < |y| < 2^(j+1), i.e. where psi(2^-j y) can be nonzero."""
    R = 2 ** (j + 1)
    axis = np.arange(-R, R + 1, dtype=np.int64)
    if d == 1:
        pts = axis.reshape(-1, 1)
    else:
        pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    r2 = np.sum(pts.astype(np.float64) ** 2, axis=1)
    keep = (r2 > 4.0 ** (j - 1)) & (r2 < 4.0 ** (j + 1))
    return pts[keep]
