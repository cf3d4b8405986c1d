"""Shared fixtures: the bundled layout solved once per session.

Solved bases and sampled field grids are cached on disk under tests/_cache
so repeated test runs skip the expensive electrostatics.
"""
from pathlib import Path

import pytest

import surftrap

CACHE_DIR = Path(__file__).parent / "_cache"


@pytest.fixture(scope="session")
def bundled_layout():
    return surftrap.default_layout()


@pytest.fixture(scope="session")
def bundled_drive():
    return surftrap.default_drive()


@pytest.fixture(scope="session")
def bundled_basis(bundled_layout):
    return surftrap.solve_layout(bundled_layout, 6, cache_dir=CACHE_DIR)


@pytest.fixture(scope="session")
def bundled_grid(bundled_basis, bundled_layout, bundled_drive):
    cfg = surftrap.IntegratorConfig()
    return surftrap.prepare_field_grid(
        bundled_basis, bundled_layout, bundled_drive.dc_voltages,
        cfg.escape_box, (72, 48, 48), cache_dir=CACHE_DIR)
