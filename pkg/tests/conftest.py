"""Configuration for the pytest test suite."""

from __future__ import annotations

import pytest

from nibm.curve import ModelParams


@pytest.fixture(scope="session")
def two_cuts() -> ModelParams:
    """Separated groups: `a = b = 0.6`, `t = 0.25`."""
    return ModelParams(0.6, 0.6, 0.25)


@pytest.fixture(scope="session")
def one_cut() -> ModelParams:
    """Merged groups: `a = b = 0.6`, `t = 0.45`."""
    return ModelParams(0.6, 0.6, 0.45)
