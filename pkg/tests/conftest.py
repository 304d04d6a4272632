"""
Shared fixtures for the test suite.

Tests marked ``slow`` run full multi-start fits on planted data; use
``pytest -m "not slow"`` for the quick suite.
"""
import logging

import numpy as np
import pytest

from src.optimization.ncg import OptimizerConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running recovery and end-to-end fits")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def make_factors():
    """Factory for random factor matrices: make_factors(rng, dims, rank)."""
    def _make(rng, dims, rank):
        return tuple(rng.standard_normal((d, rank)) for d in dims)
    return _make


@pytest.fixture
def tight_optimizer():
    return OptimizerConfig(max_iterations=20000, rel_f_tol=1e-15, grad_tol=1e-12)


@pytest.fixture(autouse=True)
def _isolate_logs(tmp_path, monkeypatch):
    """Keep the JSON fit log and any relative output inside the test's temp directory."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('CONFIG_PATH', raising=False)
    root = logging.getLogger()
    handlers = list(root.handlers)
    yield
    for handler in root.handlers[:]:
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
