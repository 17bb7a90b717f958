"""Cholesky-based solves and Gaussian draws for symmetric positive-definite precisions."""

import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from errors import NumericalError

logger = logging.getLogger(__name__)

# Added to the precision diagonal on a failed factorization, retried once
JITTER = 1e-10


def factor_precision(precision: np.ndarray, stage: str, iteration: int | None = None):
    """Lower Cholesky factor of ``precision``, retrying once with diagonal jitter."""
    if not np.all(np.isfinite(precision)):
        raise NumericalError("precision matrix has non-finite entries", stage=stage, iteration=iteration)
    try:
        return cho_factor(precision, lower=True)
    except LinAlgError:
        logger.debug("Cholesky failed at %s (iteration %s); retrying with jitter", stage, iteration)
    try:
        return cho_factor(precision + JITTER * np.eye(precision.shape[0]), lower=True)
    except LinAlgError as exc:
        raise NumericalError(
            "precision matrix is not positive definite",
            stage=stage,
            iteration=iteration,
            condition=float(np.linalg.cond(precision)),
        ) from exc


def gaussian_from_precision(
    precision: np.ndarray,
    linear: np.ndarray,
    gen: np.random.Generator,
    stage: str,
    iteration: int | None = None,
) -> np.ndarray:
    """Draw from N(P^-1 h, P^-1) given precision P and linear term h."""
    dim = precision.shape[0]
    if dim == 0:
        return np.zeros(0)
    factor = factor_precision(precision, stage, iteration)
    mean = cho_solve(factor, linear)
    z = gen.standard_normal(dim)
    return mean + solve_triangular(factor[0], z, lower=True, trans="T")


def invert_precision(precision: np.ndarray, stage: str, iteration: int | None = None) -> np.ndarray:
    """Covariance P^-1 of an SPD precision, symmetrized."""
    dim = precision.shape[0]
    if dim == 0:
        return np.zeros((0, 0))
    cov = cho_solve(factor_precision(precision, stage, iteration), np.eye(dim))
    return 0.5 * (cov + cov.T)
