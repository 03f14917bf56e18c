"""Shared fixtures and independent dense oracles used across the suite.

The oracle helpers deliberately use explicit matrix inverses and loops so
they stay independent of the library's solver paths.
"""

import numpy as np
import pytest

from ipcpanel.model import PanelDataset


def dense_annihilator(f: np.ndarray) -> np.ndarray:
    """I - F (F'F)^{-1} F' via explicit inversion (oracle path)."""
    t = f.shape[0]
    if f.shape[1] == 0:
        return np.eye(t)
    return np.eye(t) - f @ np.linalg.inv(f.T @ f) @ f.T


def dense_projector(f: np.ndarray) -> np.ndarray:
    t = f.shape[0]
    if f.shape[1] == 0:
        return np.zeros((t, t))
    return f @ np.linalg.inv(f.T @ f) @ f.T


def random_panel(seed, n=6, t=7, d_x=2, n_factors=1, noise=0.5):
    """Small panel with a known factor structure for oracle comparisons."""
    rng = np.random.default_rng(seed)
    beta = rng.normal(1.0, 0.5, d_x)
    factors = rng.normal(0.0, 1.0, (t, n_factors))
    loadings = rng.normal(0.0, 1.0, (n, n_factors))
    x = rng.normal(0.0, 1.0, (n, t, d_x)) + rng.normal(0.0, 0.3, (n, 1, d_x))
    y = x @ beta + loadings @ factors.T + noise * rng.normal(0.0, 1.0, (n, t))
    return PanelDataset(y=y, x=x), beta, factors, loadings


@pytest.fixture
def tiny_panel():
    dataset, *_ = random_panel(11)
    return dataset
