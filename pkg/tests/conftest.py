"""Shared fixtures and helpers for the test suite."""

import sys

import numpy as np
import pytest

from aniflow.harness import InitSpec, generate_initial
from aniflow.spectral import SpectralField, SpectralGrid


def make_grid(n: int) -> SpectralGrid:
    return SpectralGrid(n, n, n)


def random_state(n: int, seed: int, amplitude: float = 0.2, k_max: int | None = None):
    """Random dealiased small state on an n^3 grid, deterministic in seed."""
    grid = make_grid(n)
    if k_max is None:
        k_max = min(4, n // 3)
    spec = InitSpec(k_max=k_max, amplitude_B0=amplitude, seed=seed)
    return generate_initial(grid, spec)


def field_from_physical(grid: SpectralGrid, func) -> SpectralField:
    """Sample func(x1, x2, x3) on the grid and transform."""
    axes = [
        np.arange(n) * (grid.box_length / n) for n in (grid.n1, grid.n2, grid.n3)
    ]
    X1, X2, X3 = np.meshgrid(*axes, indexing="ij")
    return SpectralField(grid, grid.to_spectral(func(X1, X2, X3)))


def max_coeff_diff(a, b) -> float:
    return float(np.max(np.abs(a.coeffs - b.coeffs)))


@pytest.fixture
def grid8():
    return make_grid(8)


@pytest.fixture
def grid16():
    return make_grid(16)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-criterion verdict lines after the test report."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
