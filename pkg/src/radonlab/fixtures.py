"""Named polynomial maps and kernels used by tests, experiments and the CLI."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable

from .kernels import KERNEL_REGISTRY, CZKernel, kernel_from_spec
from .poly_map import PolynomialMap


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    build: Callable[[], PolynomialMap]
    admissible: bool = True

    @property
    def P(self) -> PolynomialMap:
        return self.build()


def universal_map(d: int, D: int) -> PolynomialMap:
    """[P(t)]_alpha = t^alpha over all multiindices 0 < |alpha| <= D (lexicographic by degree)."""
    alphas = sorted((a for a in product(range(D + 1), repeat=d) if 0 < sum(a) <= D), key=lambda a: (sum(a), tuple(-x for x in a)))
    n = len(alphas)
    return PolynomialMap.from_coeffs(d, n, {a: [int(i == k) for i in range(n)] for k, a in enumerate(alphas)})


def _lojasiewicz_failure() -> PolynomialMap:
    # t1^2 + t2^2 (1 - t1 t2)^2, bounded along the hyperbola t1 t2 = 1
    return PolynomialMap.from_coeffs(2, 1, {(2, 0): [1], (0, 2): [1], (1, 3): [-2], (2, 4): [1]})


def _registry() -> dict[str, Fixture]:
    reg: dict[str, Fixture] = {}

    def add(name, desc, fn, admissible=True):
        reg[name] = Fixture(name, desc, fn, admissible)

    for k in range(1, 6):
        add(f"t{k}", f"t -> t^{k}", lambda k=k: PolynomialMap.monomial_curve(k))
    for k in range(2, 6):
        add(f"curve_{k}", f"t -> (t, t^{k})", lambda k=k: PolynomialMap.monomial_curve(1, k))
    for k in range(2, 5):
        add(f"moment_{k}", "t -> (t, t^2, ..., t^%d)" % k, lambda k=k: PolynomialMap.monomial_curve(*range(1, k + 1)))
    for d in (1, 2):
        for D in (1, 2, 3):
            add(f"iw_d{d}_D{D}", f"all monomials t^alpha, alpha in N^{d}, 0 < |alpha| <= {D}",
                lambda d=d, D=D: universal_map(d, D))
    add("t3_plus_t", "t -> t^3 + t", lambda: PolynomialMap.from_coeffs(1, 1, {(1,): [1], (3,): [1]}))
    add("lojasiewicz_failure", "t1^2 + t2^2 (1 - t1 t2)^2; violates the coercivity condition",
        _lojasiewicz_failure, admissible=False)
    return reg


FIXTURES: dict[str, Fixture] = _registry()


def get_map(ref: str | dict) -> PolynomialMap:
    """A fixture name, or an inline map document as produced by PolynomialMap.to_dict."""
    if isinstance(ref, dict):
        return PolynomialMap.from_dict(ref)
    try:
        return FIXTURES[ref].P
    except KeyError:
        raise KeyError(f"unknown map {ref!r}; known: {sorted(FIXTURES)}") from None


def get_kernel(ref: str | dict) -> CZKernel:
    return kernel_from_spec(ref)


def list_fixtures() -> dict:
    return {
        "maps": {name: {"description": f.description, "admissible": f.admissible, "map": f.P.to_dict()}
                 for name, f in FIXTURES.items()},
        "kernels": dict(KERNEL_REGISTRY),
    }
