"""Variational-Bayes EM for the pseudo-likelihood mixed binomial model.

The variational family factors into a Gaussian over zeta = (beta', eta')', an
inverse-gamma over sigma2_eta and one local parameter xi_i per unit. The
inverse-gamma factor is IG(a + r/2, b_eta): ``b_eta`` is its rate, and
(a + r/2) / b_eta is the expected random-effect precision used in each
global update.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from data.design import DesignMatrices
from errors import DomainError, NumericalError
from models.linalg import invert_precision
from models.spec import FitDraws, PlMbModelSpec, VbConfig
from sampling.rng import RngStream, as_generator

logger = logging.getLogger(__name__)

# Below this xi the PG mean factor uses its Taylor expansion
_SMALL_XI = 1e-4


@dataclass(frozen=True, eq=False)
class VbPosterior:
    """Converged variational parameters."""

    mu: np.ndarray
    sigma: np.ndarray
    b_eta: float
    xi: np.ndarray
    iterations: int
    converged: bool
    spec: PlMbModelSpec
    x_columns: tuple[str, ...] = ()
    phi_columns: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return self.spec.q

    @property
    def r(self) -> int:
        return self.spec.r

    @property
    def mu_beta(self) -> np.ndarray:
        return self.mu[: self.q]

    @property
    def mu_eta(self) -> np.ndarray:
        return self.mu[self.q:]

    @property
    def sigma_eta(self) -> np.ndarray:
        return self.sigma[self.q:, self.q:]

    @property
    def shape_eta(self) -> float:
        return self.spec.a + self.r / 2.0

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of the variational covariance."""
        return np.linalg.cholesky(self.sigma)


def expected_omega(xi, weights) -> np.ndarray:
    """w_i / (2 xi_i) * tanh(xi_i / 2), with the limit w_i / 4 as xi_i -> 0."""
    xi = np.abs(np.asarray(xi, dtype=float))
    w = np.asarray(weights, dtype=float)
    small = xi < _SMALL_XI
    safe = np.where(small, 1.0, xi)
    exact = np.tanh(safe / 2.0) / (2.0 * safe)
    series = 0.25 - xi**2 / 48.0
    return w * np.where(small, series, exact)


def vb_fit(
    spec: PlMbModelSpec,
    design: DesignMatrices,
    y,
    weights,
    config: VbConfig | None = None,
) -> VbPosterior:
    """Iterate the VB-EM updates until mu and b_eta stabilise or max_iter is hit.

    Stops when max |mu_t - mu_{t-1}| < tol and |b_t - b_{t-1}| / b_{t-1} < tol.
    Responses must be binary (one trial per unit).
    """
    config = config or VbConfig()
    spec = spec.resolve(design.q, design.r)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.shape[0] == 0:
        raise DomainError("cannot fit an empty sample")
    if not (y.shape[0] == w.shape[0] == design.n):
        raise DomainError("y, weights and the design must have the same length")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("the VB engine supports binary responses (n_i = 1) only")

    q, r = design.q, design.r
    D = design.D
    shape_eta = spec.a + r / 2.0
    linear = D.T @ (w * (y - 0.5))
    prior_beta = np.full(q, 1.0 / spec.sigma2_beta)

    b_eta = spec.b
    xi = np.ones(design.n)
    mu = np.zeros(q + r)
    sigma = np.zeros((q + r, q + r))
    converged = False

    logger.info("VB: n=%d q=%d r=%d, tol=%g, max_iter=%d", design.n, q, r, config.tol, config.max_iter)
    start = time.perf_counter()
    t = 0
    for t in range(1, config.max_iter + 1):
        omega = expected_omega(xi, w)
        precision = D.T @ (D * omega[:, None])
        precision[np.diag_indices(q + r)] += np.concatenate([prior_beta, np.full(r, shape_eta / b_eta)])
        sigma = invert_precision(precision, "vb", t)

        mu_new = sigma @ linear
        mu_eta = mu_new[q:]
        b_new = spec.b + 0.5 * (mu_eta @ mu_eta + np.trace(sigma[q:, q:]))
        xi = np.sqrt(np.einsum("ij,jk,ik->i", D, sigma, D) + (D @ mu_new) ** 2)

        if not (np.all(np.isfinite(mu_new)) and np.isfinite(b_new) and np.all(np.isfinite(xi))):
            raise NumericalError("non-finite variational update", stage="vb", iteration=t)

        delta_mu = float(np.max(np.abs(mu_new - mu)))
        delta_b = abs(b_new - b_eta) / b_eta
        logger.debug("VB iteration %d: max|dmu|=%.3e, rel db=%.3e", t, delta_mu, delta_b)
        mu, b_eta = mu_new, b_new
        if delta_mu < config.tol and delta_b < config.tol:
            converged = True
            break

    wall = time.perf_counter() - start
    if converged:
        logger.info("VB converged after %d iterations in %.2fs", t, wall)
    else:
        logger.warning("VB did not converge within %d iterations", config.max_iter)

    return VbPosterior(
        mu=mu,
        sigma=sigma,
        b_eta=float(b_eta),
        xi=xi,
        iterations=t,
        converged=converged,
        spec=spec,
        x_columns=design.x_columns,
        phi_columns=design.phi_columns,
        meta={"engine": "vb", "wall_time": wall},
    )


def vb_sample(post: VbPosterior, m: int, rng: RngStream | np.random.Generator) -> FitDraws:
    """Independent draws of zeta ~ N(mu, Sigma) and sigma2_eta ~ IG(a + r/2, b_eta)."""
    if m < 1:
        raise DomainError(f"draw count must be >= 1, got {m}")
    gen = as_generator(rng)
    z = gen.standard_normal((m, post.mu.shape[0]))
    zeta = post.mu + z @ post.cholesky().T
    sigma2 = post.b_eta / gen.gamma(post.shape_eta, size=m)
    return FitDraws(
        beta=zeta[:, : post.q],
        eta=zeta[:, post.q:],
        sigma2_eta=sigma2,
        x_columns=post.x_columns,
        phi_columns=post.phi_columns,
        meta={
            "engine": "vb",
            "iterations": post.iterations,
            "converged": post.converged,
            **post.meta,
        },
    )
