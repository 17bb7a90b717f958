"""Polya-Gamma Gibbs sampler for the pseudo-likelihood mixed binomial model.

Each sweep draws omega, eta, beta and sigma2_eta from their full conditionals
under the survey-weighted pseudo-likelihood, in that fixed order.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from data.design import DesignMatrices, pseudo_counts
from errors import DomainError
from models.linalg import gaussian_from_precision
from models.spec import FitDraws, GibbsConfig, PlMbModelSpec
from sampling.polya_gamma import DEFAULT_TRUNCATION, pg_mean_array, sample_pg_array
from sampling.rng import RngStream, as_generator

logger = logging.getLogger(__name__)


@dataclass
class GibbsState:
    """Current values of beta, eta, sigma2_eta and the PG auxiliaries omega."""

    beta: np.ndarray
    eta: np.ndarray
    sigma2_eta: float
    omega: np.ndarray

    def __post_init__(self):
        if not self.sigma2_eta > 0:
            raise DomainError(f"sigma2_eta must be > 0, got {self.sigma2_eta}")
        if np.any(self.omega <= 0):
            raise DomainError("omega must be elementwise positive")

    @classmethod
    def initial(cls, q: int, r: int, pseudo_trials: np.ndarray) -> "GibbsState":
        """beta = 0, eta = 0, sigma2_eta = 1 and omega at its PG(w~ n, 0) mean."""
        return cls(
            beta=np.zeros(q),
            eta=np.zeros(r),
            sigma2_eta=1.0,
            omega=pg_mean_array(pseudo_trials, 0.0),
        )


def kappa(y, n_trials, weights) -> np.ndarray:
    """kappa_i = w~_i * (y_i - n_i / 2)."""
    y = np.asarray(y, dtype=float)
    return np.asarray(weights, dtype=float) * (y - np.asarray(n_trials, dtype=float) / 2.0)


def draw_omega(
    state: GibbsState,
    design: DesignMatrices,
    pseudo_trials: np.ndarray,
    rng: RngStream,
    chunk_size: int = 4096,
    n_jobs: int = 1,
    truncation: int = DEFAULT_TRUNCATION,
) -> np.ndarray:
    """omega_i ~ PG(w~_i n_i, x_i' beta + phi_i' eta).

    Observations are split into fixed chunks, chunk ``k`` drawing from
    ``rng.child(k)``, so the result does not depend on ``n_jobs``.
    """
    psi = design.X @ state.beta + design.Phi @ state.eta
    starts = range(0, psi.shape[0], chunk_size)

    def _draw(k, start):
        stop = start + chunk_size
        return sample_pg_array(pseudo_trials[start:stop], psi[start:stop], rng.child(k), truncation)

    if n_jobs == 1 or len(starts) == 1:
        parts = [_draw(k, s) for k, s in enumerate(starts)]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_draw)(k, s) for k, s in enumerate(starts)
        )
    return np.concatenate(parts)


def draw_eta(
    state: GibbsState,
    design: DesignMatrices,
    kappa_vec: np.ndarray,
    sigma2_eta: float,
    rng: RngStream | np.random.Generator,
    iteration: int | None = None,
) -> np.ndarray:
    """eta | . ~ N(Q^-1 Phi'(kappa - Omega X beta), Q^-1), Q = Phi' Omega Phi + I / sigma2_eta."""
    if design.r == 0:
        return np.zeros(0)
    phi_w = design.Phi * state.omega[:, None]
    precision = design.Phi.T @ phi_w + np.eye(design.r) / sigma2_eta
    linear = design.Phi.T @ (kappa_vec - state.omega * (design.X @ state.beta))
    return gaussian_from_precision(precision, linear, as_generator(rng), "eta", iteration)


def draw_beta(
    state: GibbsState,
    design: DesignMatrices,
    kappa_vec: np.ndarray,
    sigma2_beta: float,
    rng: RngStream | np.random.Generator,
    iteration: int | None = None,
) -> np.ndarray:
    """beta | . ~ N(Q^-1 X'(kappa - Omega Phi eta), Q^-1), Q = X' Omega X + I / sigma2_beta."""
    x_w = design.X * state.omega[:, None]
    precision = design.X.T @ x_w + np.eye(design.q) / sigma2_beta
    linear = design.X.T @ (kappa_vec - state.omega * (design.Phi @ state.eta))
    return gaussian_from_precision(precision, linear, as_generator(rng), "beta", iteration)


def draw_sigma_eta(eta: np.ndarray, a: float, b: float, rng: RngStream | np.random.Generator) -> float:
    """sigma2_eta | . ~ IG(a + r/2, b + eta'eta / 2) (shape, rate)."""
    if a <= 0 or b <= 0:
        raise DomainError(f"IG hyperparameters must be > 0, got a={a}, b={b}")
    shape = a + eta.shape[0] / 2.0
    rate = b + float(eta @ eta) / 2.0
    return rate / as_generator(rng).gamma(shape)


def run_gibbs(
    spec: PlMbModelSpec,
    design: DesignMatrices,
    y,
    n_trials,
    weights,
    config: GibbsConfig | None = None,
    stream: RngStream | None = None,
) -> FitDraws:
    """Run the sweep omega -> eta -> beta -> sigma2_eta and keep post-burn-in draws.

    Randomness: iteration ``t`` uses ``root.child(t)`` where ``root`` is
    ``stream`` or ``RngStream(seed, chain)``; its child 0 feeds the omega
    chunks and child 1 the location and variance draws.
    """
    config = config or GibbsConfig()
    spec = spec.resolve(design.q, design.r)
    y = np.asarray(y, dtype=float)
    n_trials = np.asarray(n_trials, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if y.shape[0] == 0:
        raise DomainError("cannot fit an empty sample")
    if not (y.shape[0] == n_trials.shape[0] == weights.shape[0] == design.n):
        raise DomainError("y, n_trials, weights and the design must have the same length")

    kappa_vec = kappa(y, n_trials, weights)
    _, pseudo_trials = pseudo_counts(y, n_trials, weights)
    state = GibbsState.initial(design.q, design.r, pseudo_trials)
    root = stream if stream is not None else RngStream(config.seed, config.chain)

    total = config.burnin + config.retained * config.thin
    beta = np.empty((config.retained, design.q))
    eta = np.empty((config.retained, design.r))
    sigma2 = np.empty(config.retained)

    logger.info("Gibbs: n=%d q=%d r=%d, %d iterations (burn-in %d, thin %d)",
                design.n, design.q, design.r, total, config.burnin, config.thin)
    start = time.perf_counter()
    iterations = range(total)
    if config.progress:
        iterations = tqdm(iterations, desc="gibbs", leave=False)

    kept = 0
    for t in iterations:
        step = root.child(t)
        try:
            state.omega = draw_omega(
                state, design, pseudo_trials, step.child(0),
                chunk_size=config.chunk_size, n_jobs=config.n_jobs, truncation=config.truncation,
            )
            gen = step.child(1).generator
            state.eta = draw_eta(state, design, kappa_vec, state.sigma2_eta, gen, iteration=t)
            state.beta = draw_beta(state, design, kappa_vec, spec.sigma2_beta, gen, iteration=t)
            state.sigma2_eta = draw_sigma_eta(state.eta, spec.a, spec.b, gen)
        except DomainError as exc:
            raise DomainError(f"Gibbs iteration {t}: {exc}") from exc

        if t >= config.burnin and (t - config.burnin) % config.thin == 0:
            beta[kept] = state.beta
            eta[kept] = state.eta
            sigma2[kept] = state.sigma2_eta
            kept += 1

    wall = time.perf_counter() - start
    logger.info("Gibbs finished in %.2fs", wall)
    return FitDraws(
        beta=beta,
        eta=eta,
        sigma2_eta=sigma2,
        x_columns=design.x_columns,
        phi_columns=design.phi_columns,
        meta={
            "engine": "gibbs",
            "burnin": config.burnin,
            "retained": config.retained,
            "thin": config.thin,
            "iterations": total,
            "seed": config.seed,
            "chain": config.chain,
            "wall_time": wall,
        },
    )
