"""Repeated informative-sampling experiments scored against the population truth.

Each replicate draws a Poisson PPS sample from the population, fits the
requested engines and poststratifies them, computes the direct estimators,
and records per-domain estimates. Replicates are then reduced into MSE,
squared bias, variance and interval coverage per estimator and domain.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from data.dataset import PopulationFrame, SurveyDataset
from data.design import BasisChoice, build_design
from errors import DomainError, PlsaeError, ReplicateOverflowError
from estimation.poststratify import ALL_LEVEL, CategoryRatio, poststratify
from models.fit import ENGINES, fit_binomial
from models.multinomial import CategoricalResponse, fit_plmm
from models.spec import GibbsConfig, PlMbModelSpec, VbConfig
from sampling.rng import REPLICATE_BRANCH, RngStream
from simulation.design import SimDesign, poisson_pps_sample, size_variable
from simulation.direct import direct_estimates

logger = logging.getLogger(__name__)

OUTCOMES = ("binary", "categorical")
DIRECT = "direct"
UNWEIGHTED = "unweighted"
ORACLE = "oracle"
ESTIMATORS = (*ENGINES, DIRECT, UNWEIGHTED, ORACLE)

# Normal quantile for the direct estimator's 95% Wald interval
_Z95 = 1.959963984540054

RESULT_COLUMNS = ["replicate", "estimator", "domain", "estimate", "se", "ci_low", "ci_high"]
DOMAIN_COLUMNS = [
    "estimator", "domain", "truth", "replicates", "mse", "bias2", "variance",
    "coverage", "se_ratio",
]
SUMMARY_COLUMNS = ["estimator", "domains", "mse", "bias2", "variance", "coverage", "se_ratio"]


@dataclass(frozen=True, eq=False)
class ScoreBoard:
    """Aggregated simulation scores.

    ``summary`` averages ``per_domain`` across domains for each estimator;
    ``results`` keeps every replicate's estimates and ``replicates`` the
    per-replicate log with wall times.
    """

    summary: pd.DataFrame
    per_domain: pd.DataFrame
    results: pd.DataFrame
    replicates: pd.DataFrame
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return int((self.replicates["status"] != "ok").sum())

    @property
    def failure_rate(self) -> float:
        return self.n_failed / len(self.replicates) if len(self.replicates) else 0.0

    def check_failures(self, threshold: float) -> None:
        """Raise when the failed fraction of replicates exceeds ``threshold``."""
        if self.failure_rate > threshold:
            raise ReplicateOverflowError(
                f"{self.n_failed} of {len(self.replicates)} replicates failed "
                f"(threshold {threshold:.0%})"
            )


@dataclass(frozen=True, eq=False)
class _SimContext:
    population: pd.DataFrame
    frame: PopulationFrame
    covariates: tuple[str, ...]
    factor_levels: dict[str, tuple[str, ...]]
    areas: tuple[str, ...]
    domains: tuple[str, ...]
    outcome: str
    design: SimDesign
    engines: tuple[str, ...]
    spec: PlMbModelSpec
    gibbs: GibbsConfig
    vb: VbConfig
    basis: BasisChoice | None
    truth: pd.Series
    categories: tuple[str, ...] = ()
    groups: tuple[str, ...] = ()


def category_label(group: str, outcome) -> str:
    """Joint category of a (group, binary outcome) pair."""
    return f"{group}:{int(outcome)}"


def group_ratios(groups) -> list[CategoryRatio]:
    """Outcome rate within each group as a ratio of joint categories."""
    return [
        CategoryRatio(str(g), (category_label(g, 1),), (category_label(g, 0), category_label(g, 1)))
        for g in groups
    ]


def domain_truth(population: pd.DataFrame, domains, outcome: str = "binary") -> pd.Series:
    """Finite-population proportions indexed by domain id."""
    keys = list(domains) + (["group"] if outcome == "categorical" else [])
    if not keys:
        return pd.Series({"all": float(population["outcome"].mean())}, name="truth")
    ids = population[keys].astype(str).agg(":".join, axis=1)
    return population["outcome"].astype(float).groupby(ids, sort=True).mean().rename("truth")


def _domain_id(estimate, categorical: bool) -> str:
    if not categorical:
        return estimate.domain
    if estimate.domain == ALL_LEVEL:
        return estimate.quantity
    return f"{estimate.domain}:{estimate.quantity}"


def _model_rows(estimates, categorical: bool) -> list[dict]:
    rows = []
    for e in estimates:
        if e.flags:
            continue
        rows.append({
            "domain": _domain_id(e, categorical),
            "estimate": e.point,
            "se": e.se,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
        })
    return rows


def _fit_and_predict(ctx: _SimContext, engine: str, sample: pd.DataFrame, stream: RngStream) -> list[dict]:
    categorical = ctx.outcome == "categorical"
    dataset = SurveyDataset.from_frame(
        sample,
        covariates=ctx.covariates,
        areas=ctx.areas,
        factor_levels=ctx.factor_levels,
        family="multinomial" if categorical else "binomial",
        categories=ctx.categories or None,
    )
    design = build_design(dataset, ctx.basis)
    domains = (tuple(ctx.domains),)
    if categorical:
        response = CategoricalResponse(dataset.category_counts(), dataset.trials)
        fit = fit_plmm(
            response, design, ctx.spec, engine=engine, gibbs=ctx.gibbs, vb=ctx.vb,
            categories=dataset.categories, stream=stream,
        )
        estimates = poststratify(fit, ctx.frame, domains, ratios=group_ratios(ctx.groups))
        estimates = [e for e in estimates if e.quantity in ctx.groups]
    else:
        fit = fit_binomial(
            engine, ctx.spec, design, dataset.responses(), dataset.trials,
            gibbs=ctx.gibbs, vb=ctx.vb, stream=stream,
        )
        estimates = poststratify(fit, ctx.frame, domains, schema=design.schema)
    return _model_rows(estimates, categorical)


def _direct_rows(ctx: _SimContext, sample: pd.DataFrame) -> tuple[list[dict], list[dict]]:
    keys = list(ctx.domains) + (["group"] if ctx.outcome == "categorical" else [])
    direct = direct_estimates(sample, domain=keys or None, outcome="outcome", weight="weight", pi="pi")
    weighted, unweighted = [], []
    for row in direct.itertuples(index=False):
        if row.n == 0:
            continue
        weighted.append({
            "domain": row.domain,
            "estimate": row.weighted,
            "se": row.se,
            "ci_low": row.weighted - _Z95 * row.se,
            "ci_high": row.weighted + _Z95 * row.se,
        })
        unweighted.append({
            "domain": row.domain, "estimate": row.unweighted,
            "se": np.nan, "ci_low": np.nan, "ci_high": np.nan,
        })
    return weighted, unweighted


def _oracle_rows(ctx: _SimContext) -> list[dict]:
    return [
        {"domain": d, "estimate": t, "se": 0.0, "ci_low": t, "ci_high": t}
        for d, t in ctx.truth.items()
    ]


def run_replicate(ctx: _SimContext, replicate: int) -> tuple[list[dict], dict]:
    """One replicate: sample, estimate with every requested estimator, log outcome.

    Randomness: ``RngStream(seed, 0, (REPLICATE_BRANCH, replicate))``; child 0
    draws the sample and child ``1 + j`` roots the j-th engine's fit.
    """
    stream = RngStream(ctx.design.seed, 0, (REPLICATE_BRANCH, replicate))
    log = {"replicate": replicate, "status": "ok", "n_sampled": 0, "error": ""}
    rows: list[dict] = []
    try:
        size = size_variable(ctx.population["raw_weight"], ctx.population["outcome"], ctx.design.gamma)
        pps = poisson_pps_sample(size, ctx.design.expected_n, stream.child(0))
        if pps.n == 0:
            raise DomainError("empty sample")
        sample = ctx.population.iloc[pps.index].reset_index(drop=True)
        sample["weight"] = pps.weights
        sample["pi"] = pps.pi
        sample["trials"] = 1
        sample["response"] = sample["category"] if ctx.outcome == "categorical" else sample["outcome"]
        log["n_sampled"] = pps.n

        weighted, unweighted = _direct_rows(ctx, sample)
        for name, est in ((DIRECT, weighted), (UNWEIGHTED, unweighted)):
            rows += [{"replicate": replicate, "estimator": name, **r} for r in est]
        if ORACLE in ctx.engines:
            rows += [{"replicate": replicate, "estimator": ORACLE, **r} for r in _oracle_rows(ctx)]

        for j, engine in enumerate(e for e in ctx.engines if e in ENGINES):
            start = time.perf_counter()
            est = _fit_and_predict(ctx, engine, sample, stream.child(1 + j))
            log[f"seconds_{engine}"] = time.perf_counter() - start
            rows += [{"replicate": replicate, "estimator": engine, **r} for r in est]
    except PlsaeError as exc:
        logger.warning("Replicate %d failed: %s", replicate, exc)
        log["status"] = "failed"
        log["error"] = str(exc)
        rows = []
    return rows, log


def score(results: pd.DataFrame, truth: pd.Series) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-domain and per-estimator scores from long-format replicate results."""
    if results.empty:
        return pd.DataFrame(columns=DOMAIN_COLUMNS), pd.DataFrame(columns=SUMMARY_COLUMNS)

    df = results.merge(truth.rename("truth"), left_on="domain", right_index=True, how="inner")
    df["covered"] = np.where(
        df["ci_low"].isna(), np.nan,
        ((df["ci_low"] <= df["truth"]) & (df["truth"] <= df["ci_high"])).astype(float),
    )

    direct_se = df.loc[df["estimator"] == DIRECT, ["replicate", "domain", "se"]].rename(columns={"se": "direct_se"})
    df = df.merge(direct_se, on=["replicate", "domain"], how="left")
    is_model = df["estimator"].isin(ENGINES) & (df["direct_se"] > 0)
    df["se_ratio"] = np.where(is_model, df["se"] / df["direct_se"].where(df["direct_se"] > 0), np.nan)

    grouped = df.groupby(["estimator", "domain"], sort=True)
    per_domain = grouped.agg(
        truth=("truth", "first"),
        replicates=("estimate", "size"),
        mean=("estimate", "mean"),
        coverage=("covered", "mean"),
        se_ratio=("se_ratio", "mean"),
    ).reset_index()
    df = df.merge(per_domain[["estimator", "domain", "mean"]], on=["estimator", "domain"])
    df["dev2"] = (df["estimate"] - df["mean"]) ** 2
    variance = df.groupby(["estimator", "domain"], sort=True)["dev2"].mean().rename("variance")
    per_domain = per_domain.merge(variance, left_on=["estimator", "domain"], right_index=True)
    per_domain["bias2"] = (per_domain["mean"] - per_domain["truth"]) ** 2
    # Equal to the mean squared error; summed from its parts so MSE >= bias^2 exactly
    per_domain["mse"] = per_domain["bias2"] + per_domain["variance"]
    per_domain = per_domain[DOMAIN_COLUMNS]

    summary = per_domain.groupby("estimator", sort=True).agg(
        domains=("domain", "size"),
        mse=("mse", "mean"),
        bias2=("bias2", "mean"),
        variance=("variance", "mean"),
        coverage=("coverage", "mean"),
        se_ratio=("se_ratio", "mean"),
    ).reset_index()[SUMMARY_COLUMNS]
    return per_domain, summary


def _registry(population: pd.DataFrame, col: str) -> tuple[str, ...]:
    return tuple(sorted(population[col].astype(str).unique()))


def run_simulation(
    population: pd.DataFrame,
    design: SimDesign | None = None,
    engines=ENGINES,
    domains=("area",),
    covariates: tuple[str, ...] | None = None,
    outcome: str = "binary",
    spec: PlMbModelSpec | None = None,
    gibbs: GibbsConfig | None = None,
    vb: VbConfig | None = None,
    basis: BasisChoice | None = None,
    n_jobs: int = 1,
    progress: bool = False,
) -> ScoreBoard:
    """Score the requested model engines and the direct estimators over replicates.

    ``population`` holds one row per unit with area, covariates, raw_weight and
    a binary ``outcome``; categorical runs also need ``group``. Domains are
    grouping columns among area and the covariates. Failed replicates are
    logged and excluded.
    """
    design = design or SimDesign()
    if outcome not in OUTCOMES:
        raise DomainError(f"unknown outcome '{outcome}', expected one of {OUTCOMES}")
    unknown = sorted(set(engines) - set(ESTIMATORS))
    if unknown:
        raise DomainError(f"unknown estimator(s): {unknown}")
    design.check_population(len(population))

    if covariates is None:
        covariates = tuple(population.attrs.get("covariates", ()))
    missing = [c for c in ("area", "raw_weight", "outcome", *covariates) if c not in population.columns]
    if outcome == "categorical" and "group" not in population.columns:
        missing.append("group")
    if missing:
        raise DomainError(f"population lacks column(s): {missing}")
    bad_domains = sorted(set(domains) - {"area", *covariates})
    if bad_domains:
        raise DomainError(f"domains must be area or covariate columns, got {bad_domains}")

    population = population.reset_index(drop=True).copy()
    for col in ("area", *covariates):
        population[col] = population[col].astype(str)
    groups: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()
    if outcome == "categorical":
        population["group"] = population["group"].astype(str)
        population["category"] = [category_label(g, y) for g, y in zip(population["group"], population["outcome"])]
        groups = _registry(population, "group")
        categories = tuple(category_label(g, y) for g in groups for y in (0, 1))

    truth = domain_truth(population, domains, outcome)
    ctx = _SimContext(
        population=population,
        frame=PopulationFrame.from_units(population, covariates),
        covariates=tuple(covariates),
        factor_levels={c: _registry(population, c) for c in covariates},
        areas=_registry(population, "area"),
        domains=tuple(domains),
        outcome=outcome,
        design=design,
        engines=tuple(engines),
        spec=spec or PlMbModelSpec(),
        gibbs=gibbs or GibbsConfig(),
        vb=vb or VbConfig(),
        basis=basis,
        truth=truth,
        categories=categories,
        groups=groups,
    )

    logger.info("Simulation: N=%d, expected n=%g, %d replicates, estimators %s",
                len(population), design.expected_n, design.replicates, list(engines))
    replicates = range(design.replicates)
    if n_jobs == 1:
        if progress:
            replicates = tqdm(replicates, desc="replicates")
        outputs = [run_replicate(ctx, r) for r in replicates]
    else:
        outputs = Parallel(n_jobs=n_jobs)(delayed(run_replicate)(ctx, r) for r in replicates)

    results = pd.DataFrame([row for rows, _ in outputs for row in rows], columns=RESULT_COLUMNS)
    log = pd.DataFrame([entry for _, entry in outputs])
    per_domain, summary = score(results, truth)

    timings = {
        engine: float(log[f"seconds_{engine}"].mean())
        for engine in ctx.engines if f"seconds_{engine}" in log.columns
    }
    board = ScoreBoard(summary=summary, per_domain=per_domain, results=results, replicates=log, timings=timings)
    if board.n_failed:
        logger.warning("%d of %d replicates failed", board.n_failed, design.replicates)
    return board
