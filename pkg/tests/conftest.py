from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def half_hilbert():
    from radonlab.kernels import make_kernel

    return make_kernel("one_over_y")


@pytest.fixture(scope="session")
def t3():
    from radonlab.poly_map import PolynomialMap

    return PolynomialMap.monomial_curve(3)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line; the test itself still asserts."""

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)
