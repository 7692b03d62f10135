from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pmed.grid import DensityField, box_grid, make_grid

settings.register_profile("pmed", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pmed")


def bump(grid, center=None, width=0.5, power=2):
    """Smooth compactly supported bump (1 - r^2/w^2)_+^power."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((a - c[k]) ** 2 for k, a in enumerate(grid.mesh))
    return DensityField(grid, np.maximum(1 - r2 / width**2, 0.0) ** power)


@pytest.fixture
def unit_1d():
    return make_grid(1, [8], [0.0], [0.125])


@pytest.fixture
def box2d():
    return box_grid(2, 64, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
