"""Poststratified domain estimates from posterior draws.

Each posterior draw gives a probability for every population cell; a domain's
draw is the population-weighted mean of its cells (expected mode) or the
share of cell counts drawn from the matching binomial or multinomial
(sampled mode). Draws are then summarized into point, SD and an equal-tailed
interval.
"""

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from data.dataset import PopulationFrame
from data.design import DesignSchema
from errors import DataValidationError, DomainError
from models.fit import BinomialFit
from models.multinomial import PlMmFit, plmm_cell_probs
from models.spec import FitDraws
from sampling.rng import RngStream, as_generator

logger = logging.getLogger(__name__)

MODES = ("expected", "sampled")
ALL_LEVEL = "all"
BINOMIAL_QUANTITY = "p"
ZERO_POPULATION = "zero_population"

# Domain levels produced when none are requested
DEFAULT_DOMAINS: tuple[tuple[str, ...], ...] = ((), ("area",))

ESTIMATE_COLUMNS = [
    "level", "domain", "quantity", "point", "se", "ci_low", "ci_high",
    "n_draws", "population", "flags",
]


class DrawSummary(NamedTuple):
    mean: float
    sd: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class CategoryRatio:
    """Share of the ``denominator`` categories that falls in ``numerator``.

    For insured rates within an income bracket, ``numerator`` holds the
    (bracket, insured) category and ``denominator`` both categories of the
    bracket.
    """

    name: str
    numerator: tuple[str, ...]
    denominator: tuple[str, ...]

    def __post_init__(self):
        if not self.numerator or not self.denominator:
            raise DomainError(f"ratio '{self.name}' needs numerator and denominator categories")
        if not set(self.numerator) <= set(self.denominator):
            raise DomainError(f"ratio '{self.name}': numerator categories must be in the denominator")


@dataclass(frozen=True)
class DomainEstimate:
    """Posterior-predictive summary of one quantity in one domain."""

    level: str
    domain: str
    quantity: str
    point: float
    se: float
    ci_low: float
    ci_high: float
    n_draws: int
    population: int
    flags: str = ""


@dataclass(frozen=True, eq=False)
class DomainDraws:
    """Per-draw values of one quantity in one domain."""

    level: str
    domain: str
    quantity: str
    population: int
    values: np.ndarray


def summarize_draws(draws, level: float = 0.95) -> DrawSummary:
    """Mean, SD and equal-tailed ``level`` interval (linear quantiles) of a draw vector."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise DomainError("cannot summarize an empty draw vector")
    if not 0 < level < 1:
        raise DomainError(f"interval level must lie in (0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(draws, [tail, 1.0 - tail])
    sd = float(np.std(draws, ddof=1)) if draws.size > 1 else 0.0
    return DrawSummary(float(np.mean(draws)), sd, float(low), float(high))


def level_name(keys: Sequence[str]) -> str:
    return ":".join(keys) if keys else ALL_LEVEL


def _resolve_schema(fit, schema: DesignSchema | None) -> DesignSchema:
    schema = schema if schema is not None else getattr(fit, "schema", None)
    if schema is None:
        raise DomainError("poststratification needs the design schema of the fit")
    return schema


def cell_probabilities(fit, schema: DesignSchema, cells: pd.DataFrame) -> np.ndarray:
    """Per-draw cell probabilities: (draws, cells) for binomial fits, (draws, cells, K) for PL-MM."""
    X = schema.encode_x(cells)
    Phi = schema.encode_phi(cells["area"])
    if isinstance(fit, PlMmFit):
        return plmm_cell_probs(fit, X, Phi)
    draws = fit.draws if isinstance(fit, BinomialFit) else fit
    if not isinstance(draws, FitDraws):
        raise DomainError(f"cannot poststratify a {type(fit).__name__}")
    return expit(draws.linear_predictor(X, Phi))


def _cell_values(probs: np.ndarray, counts: np.ndarray, mode: str, gen) -> np.ndarray:
    """Expected or sampled cell totals N_c * p_c per draw."""
    if mode == "expected":
        return probs * (counts[:, None] if probs.ndim == 3 else counts)
    n = counts.astype(np.int64)
    if probs.ndim == 2:
        return gen.binomial(np.broadcast_to(n, probs.shape), probs).astype(float)
    return gen.multinomial(np.broadcast_to(n, probs.shape[:2]), probs).astype(float)


def _quantity_totals(values: np.ndarray, categories, ratios) -> dict[str, tuple[np.ndarray, np.ndarray | None]]:
    """Cell-level numerators (and ratio denominators) per quantity, each (draws, cells)."""
    if values.ndim == 2:
        return {BINOMIAL_QUANTITY: (values, None)}
    index = {c: k for k, c in enumerate(categories)}
    out = {cat: (values[..., k], None) for cat, k in index.items()}
    for ratio in ratios:
        unknown = sorted(set(ratio.denominator) - set(index))
        if unknown:
            raise DomainError(f"ratio '{ratio.name}' names unknown categories: {unknown}")
        num = values[..., [index[c] for c in ratio.numerator]].sum(axis=-1)
        den = values[..., [index[c] for c in ratio.denominator]].sum(axis=-1)
        out[ratio.name] = (num, den)
    return out


def domain_draws(
    fit,
    frame: PopulationFrame,
    domains: Sequence[Sequence[str]] = DEFAULT_DOMAINS,
    mode: str = "expected",
    rng: RngStream | np.random.Generator | None = None,
    schema: DesignSchema | None = None,
    ratios: Sequence[CategoryRatio] = (),
) -> list[DomainDraws]:
    """Per-draw domain proportions for every requested domain level.

    Cells with zero population are ignored, so they never change any domain.
    """
    if mode not in MODES:
        raise DomainError(f"unknown mode '{mode}', expected one of {MODES}")
    schema = _resolve_schema(fit, schema)
    frame.check_schema(schema.covariates)
    if ratios and not isinstance(fit, PlMmFit):
        raise DomainError("category ratios need a multinomial fit")
    for keys in domains:
        missing = [k for k in keys if k not in frame.cells.columns]
        if missing:
            raise DataValidationError(f"domain column(s) not in the population frame: {missing}")

    cells = frame.cells.reset_index(drop=True)
    live = cells["count"].to_numpy() > 0
    occupied = cells.loc[live].reset_index(drop=True)
    counts = occupied["count"].to_numpy(dtype=float)

    probs = cell_probabilities(fit, schema, occupied)
    gen = as_generator(rng if rng is not None else RngStream(0))
    values = _cell_values(probs, counts, mode, gen)
    categories = fit.categories if isinstance(fit, PlMmFit) else ()
    quantities = _quantity_totals(values, categories, ratios)

    out = []
    for keys in domains:
        keys = tuple(keys)
        level = level_name(keys)
        if keys:
            codes_all = cells.groupby(list(keys), sort=True).ngroup().to_numpy()
            first = cells[list(keys)].assign(_code=codes_all).drop_duplicates("_code").sort_values("_code")
            labels = [":".join(map(str, row)) for row in first[list(keys)].itertuples(index=False)]
        else:
            labels = [ALL_LEVEL]
            codes_all = np.zeros(len(cells), dtype=int)
        codes = codes_all[live]
        n_groups = len(labels)
        population = np.bincount(codes_all, weights=cells["count"].to_numpy(dtype=float), minlength=n_groups)

        # Cell-to-domain incidence, so every draw aggregates with one product
        member = np.zeros((codes.shape[0], n_groups))
        member[np.arange(codes.shape[0]), codes] = 1.0

        for quantity, (num, den) in quantities.items():
            num_dom = num @ member
            den_dom = den @ member if den is not None else np.broadcast_to(population, num_dom.shape)
            with np.errstate(invalid="ignore", divide="ignore"):
                share = num_dom / den_dom
            for g, label in enumerate(labels):
                out.append(DomainDraws(level, label, quantity, int(population[g]), share[:, g]))
    return out


def poststratify(
    fit,
    frame: PopulationFrame,
    domains: Sequence[Sequence[str]] = DEFAULT_DOMAINS,
    mode: str = "expected",
    rng: RngStream | np.random.Generator | None = None,
    schema: DesignSchema | None = None,
    ratios: Sequence[CategoryRatio] = (),
    level: float = 0.95,
    strict: bool = False,
) -> list[DomainEstimate]:
    """Domain estimates for every requested level, quantity and domain.

    Zero-population domains are emitted with NaN summaries and the
    ``zero_population`` flag, or raise when ``strict``. Ratio draws whose
    denominator is zero (sampled mode) are dropped from that domain's summary.
    """
    estimates = []
    for dd in domain_draws(fit, frame, domains, mode, rng, schema, ratios):
        if dd.population == 0:
            if strict:
                raise DomainError(f"domain {dd.level}={dd.domain} has zero population")
            logger.warning("Domain %s=%s has zero population", dd.level, dd.domain)
            estimates.append(DomainEstimate(
                dd.level, dd.domain, dd.quantity, np.nan, np.nan, np.nan, np.nan,
                0, 0, ZERO_POPULATION,
            ))
            continue
        finite = dd.values[np.isfinite(dd.values)]
        if finite.size == 0:
            estimates.append(DomainEstimate(
                dd.level, dd.domain, dd.quantity, np.nan, np.nan, np.nan, np.nan,
                0, dd.population, "undefined_ratio",
            ))
            continue
        s = summarize_draws(finite, level)
        point = float(np.clip(s.mean, 0.0, 1.0))
        estimates.append(DomainEstimate(
            dd.level, dd.domain, dd.quantity,
            point=point,
            se=s.sd,
            # Heavily skewed draws can put the mean outside the tails
            ci_low=min(float(np.clip(s.ci_low, 0.0, 1.0)), point),
            ci_high=max(float(np.clip(s.ci_high, 0.0, 1.0)), point),
            n_draws=int(finite.size),
            population=dd.population,
        ))
    logger.info("Poststratified %d domain estimates (%s mode)", len(estimates), mode)
    return estimates


def estimates_frame(estimates: Sequence[DomainEstimate]) -> pd.DataFrame:
    """Estimates as a table with a fixed column order."""
    return pd.DataFrame([asdict(e) for e in estimates], columns=ESTIMATE_COLUMNS)
