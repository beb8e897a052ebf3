import math

import numpy as np
import pytest
from scipy.special import gamma, hyp1f1

from divkit.core import WeightedSampleSet


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def make_set(rng, n, dim, scale=1.0, shift=0.0, weighted=False):
    pts = rng.normal(size=(n, dim)) * scale + shift
    w = rng.random(n) + 0.05 if weighted else None
    return WeightedSampleSet(pts, w)


def standardized_set(rng, n, dim):
    """Empirical set with exactly zero mean and identity covariance."""
    pts = rng.normal(size=(n, dim))
    pts = pts - pts.mean(axis=0)
    cov = pts.T @ pts / n
    chol = np.linalg.cholesky(cov)
    pts = np.linalg.solve(chol, pts.T).T
    return WeightedSampleSet(pts)


def gauss_abs_moment(mean, var, alpha):
    """E|Z|^alpha for Z ~ N(mean, var); valid for alpha > -1."""
    sd = math.sqrt(var)
    return (
        sd**alpha
        * 2 ** (alpha / 2)
        * gamma((alpha + 1) / 2)
        / math.sqrt(math.pi)
        * hyp1f1(-alpha / 2, 0.5, -mean * mean / (2 * var))
    )


def gauss_energy_sq_1d(mean_gap, var_a, var_b, alpha):
    """Closed-form squared energy distance between two 1-D Gaussians."""
    cross = gauss_abs_moment(mean_gap, var_a + var_b, alpha)
    self_a = gauss_abs_moment(0.0, 2 * var_a, alpha)
    self_b = gauss_abs_moment(0.0, 2 * var_b, alpha)
    k = math.floor(alpha / 2)
    sign = 1.0 if alpha < 0 else (-1.0 if k % 2 == 0 else 1.0)
    return sign * (self_a + self_b - 2.0 * cross)
