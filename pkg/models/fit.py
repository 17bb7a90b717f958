"""Engine dispatch for binomial fits."""

import logging
from dataclasses import dataclass

import numpy as np

from data.design import DesignMatrices
from errors import DomainError
from models.gibbs import run_gibbs
from models.spec import FitDraws, GibbsConfig, PlMbModelSpec, VbConfig
from models.vb import VbPosterior, vb_fit, vb_sample
from sampling.rng import RngStream

logger = logging.getLogger(__name__)

ENGINES = ("gibbs", "vb")


@dataclass(frozen=True, eq=False)
class BinomialFit:
    """Draws from either engine, plus the variational posterior when VB produced them."""

    draws: FitDraws
    posterior: VbPosterior | None = None

    @property
    def engine(self) -> str:
        return self.draws.meta.get("engine", "vb" if self.posterior is not None else "gibbs")


def fit_binomial(
    engine: str,
    spec: PlMbModelSpec,
    design: DesignMatrices,
    y,
    n_trials,
    gibbs: GibbsConfig | None = None,
    vb: VbConfig | None = None,
    stream: RngStream | None = None,
) -> BinomialFit:
    """Fit the mixed binomial model with ``engine`` and return exportable draws.

    ``stream`` roots all randomness; by default Gibbs uses
    ``RngStream(seed, chain)`` and VB draws use ``RngStream(seed)``.
    """
    if engine == "gibbs":
        return BinomialFit(run_gibbs(spec, design, y, n_trials, design.weights, gibbs, stream=stream))
    if engine == "vb":
        vb = vb or VbConfig()
        if not np.all(np.asarray(n_trials) == 1):
            raise DomainError("the VB engine needs one trial per unit; use the Gibbs engine for n_i > 1")
        post = vb_fit(spec, design, y, design.weights, vb)
        draws = vb_sample(post, vb.draws, stream if stream is not None else RngStream(vb.seed))
        return BinomialFit(draws, post)
    raise DomainError(f"unknown engine '{engine}', expected one of {ENGINES}")


def fit_prior(
    engine: str,
    spec: PlMbModelSpec,
    design: DesignMatrices,
    gibbs: GibbsConfig | None = None,
    vb: VbConfig | None = None,
    stream: RngStream | None = None,
) -> BinomialFit:
    """Prior draws for data that carry no likelihood.

    beta ~ N(0, sigma2_beta I), sigma2_eta ~ IG(a, b), eta | sigma2_eta ~ N(0, sigma2_eta I),
    as many draws as ``engine`` would retain.
    """
    if engine not in ENGINES:
        raise DomainError(f"unknown engine '{engine}', expected one of {ENGINES}")
    if engine == "vb":
        vb = vb or VbConfig()
        m, seed = vb.draws, vb.seed
    else:
        gibbs = gibbs or GibbsConfig()
        m, seed = gibbs.retained, gibbs.seed
    gen = (stream if stream is not None else RngStream(seed)).generator
    sigma2 = spec.b / gen.gamma(spec.a, size=m)
    beta = np.sqrt(spec.sigma2_beta) * gen.standard_normal((m, design.q))
    eta = np.sqrt(sigma2)[:, None] * gen.standard_normal((m, design.r))
    return BinomialFit(FitDraws(
        beta=beta,
        eta=eta,
        sigma2_eta=sigma2,
        x_columns=design.x_columns,
        phi_columns=design.phi_columns,
        meta={"engine": engine, "prior_only": True, "seed": seed},
    ))
