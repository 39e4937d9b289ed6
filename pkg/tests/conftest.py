from __future__ import annotations

import functools

import numpy as np
import pytest

from fpbp import buildings

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@functools.lru_cache(maxsize=None)
def _building(name: str):
    return getattr(buildings, name)()


@pytest.fixture(scope="session")
def four_rooms():
    return _building("four_rooms_corridor")


@pytest.fixture(scope="session")
def two_rooms():
    return _building("two_rooms")


@pytest.fixture(scope="session")
def elevator():
    return _building("elevator_floors")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
