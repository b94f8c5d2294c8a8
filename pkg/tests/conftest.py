import math

import numpy as np
import pytest


def central_diff2(f, x0, h):
    """Second derivative by central differences."""
    return (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h)


def central_diff1(f, x0, h):
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)


def make_test_bundle(nu, dims, n_subjects, theta0, xi, seed, raw_mean=True):
    """Synthetic subject stack: Y_i = mu + (white noise * kernel).

    ``raw_mean`` plants the paraboloid in the subject-level mean (sigma=1),
    so the standardized field carries height sqrt(n)*theta0.
    """
    from peakpower.estimate import SubjectStack
    from peakpower.model import GridSpec, MeanModel
    from peakpower.randfield import gaussian_kernel, substream, synthesize_noise

    grid = GridSpec(dims=dims)
    kernel = gaussian_kernel(nu, 4.0 * nu, grid)
    center = tuple((d - 1) // 2 for d in dims)
    coords = np.meshgrid(*[np.arange(d, dtype=float) for d in dims], indexing="ij")
    r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
    theta = theta0 - r2 / (2.0 * xi * xi)
    mu = theta if raw_mean else theta / math.sqrt(n_subjects)
    vols = np.empty((n_subjects, *dims))
    for i in range(n_subjects):
        vols[i] = mu + synthesize_noise(grid, kernel, substream(seed, i))
    return SubjectStack.from_volumes(vols), center


def discrete_true_kernel(nu, half_width):
    lags = np.arange(-half_width, half_width + 1, dtype=float)
    k = np.exp(-lags**2 / (2.0 * nu * nu))
    return k / math.sqrt(float((k**2).sum()))
