"""Stick-breaking fits of the pseudo-likelihood mixed multinomial model.

A K-category multinomial factors into K - 1 conditional binomials: stick k
counts successes Z_k out of the n_k = n - sum_{j<k} Z_j trials left after
the earlier categories. Each stick is fitted as an independent mixed binomial
model under the same scaled weights, and cell probabilities are rebuilt from
the per-stick inverse logits.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from scipy.stats import binom, multinomial

from data.design import DesignMatrices, DesignSchema
from errors import DomainError, NumericalError
from models.fit import BinomialFit, fit_binomial, fit_prior
from models.spec import GibbsConfig, PlMbModelSpec, VbConfig
from sampling.rng import STICK_BRANCH, RngStream

logger = logging.getLogger(__name__)

# Tolerance on the simplex checks
_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CategoricalResponse:
    """Category counts Z (n x K) with row totals n_i."""

    counts: np.ndarray
    trials: np.ndarray

    def __post_init__(self):
        counts = np.atleast_2d(np.asarray(self.counts, dtype=float))
        trials = np.atleast_1d(np.asarray(self.trials, dtype=float))
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "trials", trials)
        if counts.shape[0] != trials.shape[0]:
            raise DomainError("counts and trials must have one row per unit")
        if counts.shape[1] < 2:
            raise DomainError("a categorical response needs K >= 2 categories")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise DomainError("category counts must be nonnegative integers")
        if np.any(trials <= 0):
            raise DomainError("trials must be positive")
        if not np.array_equal(counts.sum(axis=1), trials):
            raise DomainError("category counts must sum to the trials of each unit")

    @classmethod
    def from_labels(cls, codes, n_categories: int) -> "CategoricalResponse":
        """One trial per unit from 0-based category codes."""
        codes = np.asarray(codes, dtype=int)
        if np.any(codes < 0) or np.any(codes >= n_categories):
            raise DomainError(f"category codes must lie in 0..{n_categories - 1}")
        counts = np.zeros((codes.shape[0], n_categories))
        counts[np.arange(codes.shape[0]), codes] = 1.0
        return cls(counts, np.ones(codes.shape[0]))

    @property
    def K(self) -> int:
        return self.counts.shape[1]

    @property
    def n(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class StickData:
    """Binomial data of one stick; ``inert`` marks units with no trials left."""

    successes: np.ndarray
    trials: np.ndarray

    @property
    def inert(self) -> np.ndarray:
        return self.trials == 0


@dataclass(frozen=True, eq=False)
class PlMmFit:
    """K - 1 stick sub-fits in category order; the last category is the reference."""

    sub_fits: list[BinomialFit]
    categories: tuple[str, ...]
    schema: DesignSchema | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.sub_fits) != len(self.categories) - 1:
            raise DomainError(
                f"{len(self.categories)} categories need {len(self.categories) - 1} sub-fits, "
                f"got {len(self.sub_fits)}"
            )
        draws = {f.draws.n_draws for f in self.sub_fits}
        if len(draws) > 1:
            raise DomainError(f"sub-fits hold different draw counts: {sorted(draws)}")

    @property
    def K(self) -> int:
        return len(self.categories)

    @property
    def n_draws(self) -> int:
        return self.sub_fits[0].draws.n_draws


def stick_forward(p) -> np.ndarray:
    """Conditional stick probabilities p~_k = p_k / (1 - sum_{j<k} p_j), k < K.

    Accepts one simplex vector or a stack of them along the last axis. A stick
    with no mass left (0/0) gets p~_k = 0.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise DomainError("p must lie in the probability simplex")
    remaining = 1.0 - np.cumsum(p, axis=-1) + p
    head, rest = p[..., :-1], remaining[..., :-1]
    exhausted = rest <= _SIMPLEX_TOL
    if np.any(exhausted & (head > _SIMPLEX_TOL)):
        raise DomainError("stick mass exhausted before the last category")
    out = np.where(exhausted, 0.0, head / np.where(exhausted, 1.0, rest))
    return np.clip(out, 0.0, 1.0)


def stick_inverse(p_tilde) -> np.ndarray:
    """Category probabilities from stick probabilities (last axis has K - 1 entries)."""
    p_tilde = np.asarray(p_tilde, dtype=float)
    if np.any(p_tilde < 0) or np.any(p_tilde > 1):
        raise DomainError("stick probabilities must lie in [0, 1]")
    left = np.cumprod(1.0 - p_tilde, axis=-1)
    before = np.concatenate([np.ones(p_tilde.shape[:-1] + (1,)), left[..., :-1]], axis=-1)
    p = np.concatenate([p_tilde * before, left[..., -1:]], axis=-1)
    # The last category takes the remainder so rows sum to one
    p[..., -1] = 1.0 - p[..., :-1].sum(axis=-1)
    return np.clip(p, 0.0, 1.0)


def stick_data(response: CategoricalResponse) -> list[StickData]:
    """Per-stick (successes, trials): n_k = n - sum_{j<k} Z_j, successes Z_k."""
    before = np.cumsum(response.counts, axis=1) - response.counts
    trials = response.trials[:, None] - before
    return [
        StickData(successes=response.counts[:, k], trials=trials[:, k])
        for k in range(response.K - 1)
    ]


def multinomial_loglik(counts, p) -> float:
    """sum_i log Multinomial(Z_i | n_i, p_i)."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    p = np.broadcast_to(np.asarray(p, dtype=float), counts.shape)
    n = counts.sum(axis=1)
    return float(np.sum(multinomial.logpmf(counts, n, p)))


def stick_loglik(counts, p) -> float:
    """sum_i sum_k log Bin(Z_ik | n_ik, p~_ik), equal to ``multinomial_loglik``."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    response = CategoricalResponse(counts, counts.sum(axis=1))
    p_tilde = stick_forward(np.broadcast_to(np.asarray(p, dtype=float), counts.shape))
    total = 0.0
    for k, stick in enumerate(stick_data(response)):
        total += np.sum(binom.logpmf(stick.successes, stick.trials, p_tilde[:, k]))
    return float(total)


def _default_stream(engine: str, gibbs: GibbsConfig | None, vb: VbConfig | None) -> RngStream:
    if engine == "vb":
        return RngStream((vb or VbConfig()).seed)
    gibbs = gibbs or GibbsConfig()
    return RngStream(gibbs.seed, gibbs.chain)


def _stick_stream(base: RngStream, k: int) -> RngStream:
    """Stick 0 uses the base stream so that K = 2 matches a plain binomial fit."""
    return base if k == 0 else base.child(STICK_BRANCH, k)


def fit_plmm(
    response: CategoricalResponse,
    design: DesignMatrices,
    spec: PlMbModelSpec | None = None,
    engine: str = "gibbs",
    gibbs: GibbsConfig | None = None,
    vb: VbConfig | None = None,
    categories: tuple[str, ...] | None = None,
    n_jobs: int = 1,
    stream: RngStream | None = None,
) -> PlMmFit:
    """Fit the K - 1 sticks independently with ``engine``.

    Units with no trials left for a stick are dropped from that stick's fit, and
    a stick with no active units at all gets prior draws. Every unit keeps the
    scaled weight computed on the full sample. Each stick has its own sigma2_eta.
    """
    spec = spec or PlMbModelSpec()
    if response.n != design.n:
        raise DomainError(f"{response.n} responses for a design with {design.n} rows")
    if categories is None:
        categories = tuple(str(k + 1) for k in range(response.K))
    if len(categories) != response.K:
        raise DomainError(f"{len(categories)} category labels for K={response.K}")
    if stream is None:
        stream = _default_stream(engine, gibbs, vb)

    sticks = stick_data(response)

    def _fit(k: int, stick: StickData) -> BinomialFit:
        live = ~stick.inert
        if not live.any():
            logger.warning("Stick %d/%d: no units with trials left; using prior draws", k + 1, response.K - 1)
            return fit_prior(engine, spec, design, gibbs=gibbs, vb=vb, stream=_stick_stream(stream, k))
        logger.info("Stick %d/%d: %d active units", k + 1, response.K - 1, int(live.sum()))
        try:
            return fit_binomial(
                engine, spec, design.subset(live), stick.successes[live], stick.trials[live],
                gibbs=gibbs, vb=vb, stream=_stick_stream(stream, k),
            )
        except NumericalError as exc:
            raise NumericalError(f"stick {k + 1}: {exc}") from exc
        except DomainError as exc:
            raise DomainError(f"stick {k + 1}: {exc}") from exc

    if n_jobs == 1:
        fits = [_fit(k, s) for k, s in enumerate(sticks)]
    else:
        fits = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_fit)(k, s) for k, s in enumerate(sticks)
        )
    return PlMmFit(
        sub_fits=list(fits),
        categories=tuple(categories),
        schema=design.schema,
        meta={"engine": engine, "category_order": list(categories)},
    )


def plmm_cell_probs(fit: PlMmFit, X: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """Per-draw category probabilities for design rows, shape (draws, rows, K)."""
    p_tilde = np.stack(
        [expit(sub.draws.linear_predictor(X, Phi)) for sub in fit.sub_fits], axis=-1
    )
    return stick_inverse(p_tilde)
