from functools import lru_cache

import pytest

from warpflow.geometry import ProfileSpec, build_manifold

RING_SIGNED = (0.0, 0.26, 0.0)  # log h = 0.26 cos θ, curvature changes sign


@lru_cache(maxsize=None)
def manifold(topology: str, d: int, n: int, coeffs: tuple = (), form: str = "log"):
    return build_manifold(ProfileSpec(topology, d, coeffs, n, form))


@pytest.fixture
def s2():
    return manifold("sphere", 2, 256)


@pytest.fixture
def ring():
    return manifold("ring", 2, 256, RING_SIGNED)


@pytest.fixture
def circle():
    return manifold("circle", 1, 256)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
