from __future__ import annotations

import math

import pytest

from unilateral_turing.eigenbasis import BoundarySpec, DomainSpec, build_basis
from unilateral_turing.turing_geometry import ReactionMatrix

from oracles import EXAMPLE_B


@pytest.fixture(scope="session")
def B():
    return ReactionMatrix(*EXAMPLE_B)


@pytest.fixture(scope="session")
def interval():
    return DomainSpec.interval(math.pi)


def _basis(kind, faces, n_modes):
    domain = DomainSpec.interval(math.pi) if kind == "interval" else DomainSpec.rectangle()
    boundary = (BoundarySpec.uniform(faces, domain) if isinstance(faces, str)
                else BoundarySpec(faces))
    return build_basis(domain, boundary, n_modes)


@pytest.fixture(scope="session")
def neumann():
    return _basis("interval", "neumann", 64)


@pytest.fixture(scope="session")
def dirichlet():
    return _basis("interval", "dirichlet", 64)


@pytest.fixture(scope="session")
def mixed():
    return _basis("interval", {"left": "dirichlet", "right": "neumann"}, 64)


@pytest.fixture(scope="session")
def square_neumann():
    return _basis("rectangle", "neumann", 100)


@pytest.fixture(scope="session")
def small_neumann():
    return _basis("interval", "neumann", 16)


@pytest.fixture(scope="session")
def small_dirichlet():
    return _basis("interval", "dirichlet", 16)


@pytest.fixture(scope="session")
def make_basis():
    return _basis


# -- acceptance reporting -----------------------------------------------------

_CRITERIA: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture(scope="session")
def criterion():
    """Record ``(number, title, ok, detail)``; print it and fail the test when not ok."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(ok), title, detail)
        print(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title, detail = _CRITERIA[n]
        terminalreporter.write_line(
            f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
