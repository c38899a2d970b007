"""Shared fixtures: small datasets sized for fast, deterministic tests."""

import numpy as np
import pytest

from graphtune.data import gen_synthetic


@pytest.fixture(scope="session")
def gauss_small():
    """400 gaussian points in 8 dims; enough for graph invariants."""
    return gen_synthetic(400, 8, seed=11, kind="gaussian").vectors


@pytest.fixture(scope="session")
def gauss_medium():
    """2000 gaussian points in 12 dims; for recall-sensitive checks."""
    return gen_synthetic(2000, 12, seed=12, kind="gaussian").vectors


@pytest.fixture(scope="session")
def queries_small():
    return gen_synthetic(25, 8, seed=101, kind="gaussian").vectors


@pytest.fixture(scope="session")
def queries_medium():
    return gen_synthetic(50, 12, seed=102, kind="gaussian").vectors
