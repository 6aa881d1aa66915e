"""Finitely supported functions on Z^n and periodic multipliers on the torus."""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .poly_map import PCube
from .threads import fft_workers

_MAGIC = b"RLF1"


class AliasingWarning(UserWarning):
    """Raised (as a warning) when a trig polynomial does not fit the sampling grid."""


def _fsum_complex(z: np.ndarray) -> complex:
    z = np.asarray(z, dtype=np.complex128).ravel()
    return complex(math.fsum(z.real), math.fsum(z.imag))


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    """Dense values on the box prod_i [lo_i, lo_i + shape_i); zero elsewhere."""

    lo: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.ndim != len(self.lo):
            raise ValueError(f"values of rank {vals.ndim} do not match box dimension {len(self.lo)}")
        vals.setflags(write=False)
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, lo: Sequence[int], shape: Sequence[int]) -> LatticeFunction:
        return cls(tuple(lo), np.zeros(tuple(shape), dtype=np.complex128))

    @classmethod
    def delta(cls, x: Sequence[int]) -> LatticeFunction:
        return cls(tuple(x), np.ones((1,) * len(x), dtype=np.complex128))

    @classmethod
    def indicator(cls, lo: Sequence[int], shape: Sequence[int]) -> LatticeFunction:
        return cls(tuple(lo), np.ones(tuple(shape), dtype=np.complex128))

    @classmethod
    def indicator_cube(cls, Q: PCube) -> LatticeFunction:
        return cls.indicator(Q.lo, Q.shape)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def hi(self) -> tuple[int, ...]:
        return tuple(l + s for l, s in zip(self.lo, self.shape))

    def __call__(self, x: Sequence[int]) -> complex:
        idx = tuple(int(v) - l for v, l in zip(x, self.lo))
        if all(0 <= i < s for i, s in zip(idx, self.shape)):
            return complex(self.values[idx])
        return 0j

    def embed(self, lo: Sequence[int], shape: Sequence[int]) -> np.ndarray:
        """Values restricted/zero-padded onto another box (fresh writable array)."""
        out = np.zeros(tuple(shape), dtype=np.complex128)
        src, dst = [], []
        for l_self, s_self, l_new, s_new in zip(self.lo, self.shape, lo, shape):
            a, b = max(l_self, l_new), min(l_self + s_self, l_new + s_new)
            if a >= b:
                return out
            src.append(slice(a - l_self, b - l_self))
            dst.append(slice(a - l_new, b - l_new))
        out[tuple(dst)] = self.values[tuple(src)]
        return out

    def on_box(self, lo: Sequence[int], shape: Sequence[int]) -> LatticeFunction:
        return LatticeFunction(tuple(lo), self.embed(lo, shape))

    def shifted(self, v: Sequence[int]) -> LatticeFunction:
        """x -> f(x - v)."""
        return LatticeFunction(tuple(l + int(s) for l, s in zip(self.lo, v)), self.values)

    def _joint(self, other: LatticeFunction) -> tuple[tuple[int, ...], tuple[int, ...]]:
        lo = tuple(min(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(max(a, b) for a, b in zip(self.hi, other.hi))
        return lo, tuple(h - l for l, h in zip(lo, hi))

    def __add__(self, other: LatticeFunction) -> LatticeFunction:
        lo, shape = self._joint(other)
        return LatticeFunction(lo, self.embed(lo, shape) + other.embed(lo, shape))

    def __sub__(self, other: LatticeFunction) -> LatticeFunction:
        return self + other * -1.0

    def __mul__(self, c: complex) -> LatticeFunction:
        return LatticeFunction(self.lo, self.values * c)

    __rmul__ = __mul__

    def abs(self) -> LatticeFunction:
        return LatticeFunction(self.lo, np.abs(self.values))

    def allclose(self, other: LatticeFunction, rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        lo, shape = self._joint(other)
        return bool(np.allclose(self.embed(lo, shape), other.embed(lo, shape), rtol=rtol, atol=atol))

    # -- serialization -------------------------------------------------------
    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<I", self.n)
        head += struct.pack(f"<{self.n}q", *self.lo) + struct.pack(f"<{self.n}q", *self.shape)
        return head + np.ascontiguousarray(self.values, dtype="<c8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> LatticeFunction:
        if blob[:4] != _MAGIC:
            raise ValueError("not a lattice-function blob (bad magic)")
        (n,) = struct.unpack_from("<I", blob, 4)
        lo = struct.unpack_from(f"<{n}q", blob, 8)
        shape = struct.unpack_from(f"<{n}q", blob, 8 + 8 * n)
        payload = np.frombuffer(blob, dtype="<c8", offset=8 + 16 * n)
        if payload.size != math.prod(shape):
            raise ValueError("payload length does not match the header")
        return cls(lo, payload.reshape(shape).astype(np.complex128))

    def to_json(self) -> str:
        return json.dumps(
            {"lo": list(self.lo), "shape": list(self.shape),
             "re": self.values.real.ravel().tolist(), "im": self.values.imag.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> LatticeFunction:
        doc = json.loads(text)
        vals = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
        return cls(tuple(doc["lo"]), vals.reshape(tuple(doc["shape"])))


def pair(f: LatticeFunction, g: LatticeFunction) -> complex:
    """sum_x f(x) conj(g(x)) with compensated summation."""
    lo = tuple(max(a, b) for a, b in zip(f.lo, g.lo))
    hi = tuple(min(a, b) for a, b in zip(f.hi, g.hi))
    if any(h <= l for l, h in zip(lo, hi)):
        return 0j
    shape = tuple(h - l for l, h in zip(lo, hi))
    return _fsum_complex(f.embed(lo, shape) * np.conj(g.embed(lo, shape)))


def lp_norm(f: LatticeFunction | np.ndarray, p: float) -> float:
    a = np.abs(f.values if isinstance(f, LatticeFunction) else np.asarray(f)).ravel()
    if a.size == 0:
        return 0.0
    if p == math.inf:
        return float(a.max())
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    top = a.max()
    if top == 0:
        return 0.0
    return float(top * math.fsum((a / top) ** p) ** (1.0 / p))


def local_average(f: LatticeFunction, Q: PCube, r: float) -> float:
    """<f>_{Q,r}: the r-mean of |f| over Q (sup when r is infinite)."""
    if Q.cardinality == 0:
        raise ValueError("empty cube")
    if r != math.inf and r < 1:
        raise ValueError("r must lie in [1, inf]")
    a = np.abs(f.embed(Q.lo, Q.shape))
    if r == math.inf:
        return float(a.max())
    return (math.fsum(a.ravel() ** r) / Q.cardinality) ** (1.0 / r)


@dataclass(frozen=True, eq=False)
class SampledMultiplier:
    """m on the grid {0, 1/N, ..., (N-1)/N}^n, with samples[k] = m(k/N).

    ``freqs``/``coeffs`` hold the exact trigonometric expansion
    m(xi) = sum_k c_k e(k . xi) when it is known.
    """

    N: int
    samples: np.ndarray
    freqs: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.ndim

    @property
    def has_exact_frequencies(self) -> bool:
        return self.freqs is not None

    @classmethod
    def from_trig(cls, freqs: np.ndarray, coeffs: np.ndarray, N: int, meta: dict | None = None) -> SampledMultiplier:
        freqs = np.asarray(freqs, dtype=np.int64)
        if freqs.ndim == 1:
            freqs = freqs[:, None]
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        n = freqs.shape[1]
        spec = np.zeros((N,) * n, dtype=np.complex128)
        np.add.at(spec, tuple((freqs % N).T), coeffs)
        samples = sfft.ifftn(spec, norm="forward", workers=fft_workers())
        return cls(N, samples, freqs, coeffs, dict(meta or {}))

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Exact evaluation off the grid (requires the trig expansion)."""
        if self.freqs is None:
            raise ValueError("off-grid evaluation needs exact frequency metadata")
        xi = np.asarray(xi, dtype=np.float64).reshape(-1, self.n)
        xi = xi - np.floor(xi)
        phase = xi @ self.freqs.T.astype(np.float64)
        return np.exp(2j * np.pi * phase) @ self.coeffs

    def aliased(self) -> bool:
        """True when two distinct exact frequencies coincide modulo N."""
        if self.freqs is None or self.freqs.shape[0] == 0:
            return False
        f = np.unique(self.freqs, axis=0)
        return np.unique(f % self.N, axis=0).shape[0] < f.shape[0]


def dft(f: LatticeFunction, N: int | None = None) -> SampledMultiplier:
    """hat f(xi) = sum_x f(x) e(-x . xi) on the uniform grid of resolution N."""
    if N is None:
        N = max(f.shape)
    n = f.n
    folded = np.zeros((N,) * n, dtype=np.complex128)
    idx = np.stack(np.meshgrid(*[np.arange(l, l + s) for l, s in zip(f.lo, f.shape)], indexing="ij"), axis=-1)
    np.add.at(folded, tuple((idx.reshape(-1, n) % N).T), f.values.ravel())
    samples = sfft.fftn(folded, workers=fft_workers())
    pts = idx.reshape(-1, n)
    nz = f.values.ravel() != 0
    return SampledMultiplier(N, samples, -pts[nz], f.values.ravel()[nz])


def idft(m: SampledMultiplier) -> LatticeFunction:
    """Grid version of F^{-1} m.

    With exact frequency metadata the output box starts at the smallest
    position -k, so any expansion whose frequency span fits in N comes back
    without wrap-around.  Otherwise the box is centered:
    x_i in [-floor(N/2), N - 1 - floor(N/2)].
    """
    if m.aliased():
        warnings.warn(
            f"trig polynomial has frequencies that coincide modulo N={m.N}; inverse transform aliases",
            AliasingWarning,
            stacklevel=2,
        )
    vals = sfft.ifftn(m.samples, workers=fft_workers())
    if m.freqs is not None and m.freqs.shape[0] and not m.aliased():
        lo = tuple(int(v) for v in (-m.freqs).min(axis=0))
    else:
        lo = (-(m.N // 2),) * m.n
    vals = np.roll(vals, shift=[-l for l in lo], axis=tuple(range(m.n)))
    return LatticeFunction(lo, vals)
