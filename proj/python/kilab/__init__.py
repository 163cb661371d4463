"""Kernel interpolation lab: kernels, estimators, spectra, variance and NTK experiments."""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    DivergenceError,
    DomainError,
    InterpolationInfeasible,
    NumericalError,
    Fit,
    Network,
    eigensolver_backend,
    init_network,
    ntk_interpolator,
    sup_gap,
    train,
    fit_decay,
    effective_dimension,
    effective_dimension_power_law,
    theoretical_variance_power_law,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "InterpolationInfeasible",
    "NumericalError",
    "Fit",
    "Network",
    "sample",
    "quadrature",
    "kernel_eval",
    "gram",
    "cross_gram",
    "fit",
    "variance_curve",
    "dot_product_spectrum",
    "empirical_spectrum",
    "fit_decay",
    "effective_dimension",
    "effective_dimension_power_law",
    "theoretical_variance_power_law",
    "init_network",
    "train",
    "ntk_interpolator",
    "sup_gap",
    "run",
    "eigensolver_backend",
]


def _spec(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def _points(X):
    X = np.asarray(X, dtype=float)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def sample(domain, n, seed):
    """n i.i.d. uniform points, e.g. sample({"kind": "sphere", "dim": 3}, 100, 0)."""
    return _core.sample(_spec(domain), n, seed)


def quadrature(domain, resolution):
    """(nodes, weights) of the deterministic quadrature rule for the domain."""
    return _core.quadrature(_spec(domain), resolution)


def kernel_eval(kernel, x, y):
    return _core.kernel_eval(_spec(kernel), np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float)))


def gram(kernel, X):
    return _core.gram(_spec(kernel), _points(X))


def cross_gram(kernel, A, B):
    return _core.cross_gram(_spec(kernel), _points(A), _points(B))


def fit(kernel, X, Y, lam=0.0):
    """Kernel ridge regression; lam = 0 gives the minimum-norm interpolant."""
    return _core.fit(_spec(kernel), _points(X), np.asarray(Y, float), lam)


def variance_curve(kernel, domain, X, sigma2, lambdas, resolution):
    return np.asarray(
        _core.variance_curve(_spec(kernel), _spec(domain), _points(X), sigma2, list(lambdas), resolution)
    )


def dot_product_spectrum(kernel, d, n_max, quad_res):
    return np.asarray(_core.dot_product_spectrum(_spec(kernel), d, n_max, quad_res))


def empirical_spectrum(kernel, X):
    """Eigenvalues of K/n (descending) and the index window in which they are trusted."""
    values, window = _core.empirical_spectrum(_spec(kernel), _points(X))
    return np.asarray(values), tuple(window)


def run(verb, config, output_dir=None):
    """Runs an experiment ("scaling", "variance", "spectrum", "ntk", "concentration",
    "kernel-info") from a config dict or JSON string and returns its summary."""
    return json.loads(_core.run(verb, _spec(config), output_dir or ""))
