"""Synthetic unit-level populations on a lattice of areas.

Areas sit on a rows x cols grid with rook adjacency. Each area has its own
covariate mix and a spatially smoothed effect; outcomes come from a logistic
(binary) or stick-breaking (categorical) truth, and raw weights are tilted
by the outcome so that unweighted estimates are biased.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit

from data.dataset import PopulationFrame
from errors import DomainError
from models.multinomial import stick_inverse
from sampling.rng import RngStream
from simulation.design import DEFAULT_SIM, poisson_pps_sample, size_variable

logger = logging.getLogger(__name__)

DEFAULT_SYNTHPOP = {
    "rows": 5,
    "cols": 6,
    "population_size": 20000,
    "covariates": {"sex": 2, "age": 4, "race": 3},
    "outcome": "binary",
    "groups": 5,
    "intercept": -0.5,
    "effect_sd": 0.5,
    "area_sd": 0.8,
    "dirichlet_concentration": 5.0,
    "weight_log_mean": 3.0,
    "weight_log_sd": 0.5,
    "weight_outcome_shift": -0.7,
    "expected_n": DEFAULT_SIM["expected_n"],
    "gamma": DEFAULT_SIM["gamma"],
    "seed": 0,
}


@dataclass(frozen=True, eq=False)
class SyntheticPopulation:
    """Generated population plus the tables derived from it."""

    population: pd.DataFrame
    frame: PopulationFrame
    adjacency: pd.DataFrame
    survey: pd.DataFrame
    covariates: tuple[str, ...]


def area_labels(rows: int, cols: int) -> list[str]:
    width = len(str(rows * cols))
    return [f"A{i + 1:0{width}d}" for i in range(rows * cols)]


def lattice_edges(rows: int, cols: int) -> pd.DataFrame:
    """Rook-adjacency edge list of a rows x cols grid, each edge once."""
    labels = area_labels(rows, cols)
    edges = []
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                edges.append((labels[k], labels[k + 1]))
            if i + 1 < rows:
                edges.append((labels[k], labels[k + cols]))
    return pd.DataFrame(edges, columns=["area_a", "area_b"])


def _smoothed_effects(rows: int, cols: int, sd: float, gen: np.random.Generator, size: int = 1) -> np.ndarray:
    """Area effects averaged with their neighbours, rescaled to standard deviation ``sd``."""
    m = rows * cols
    adj = np.zeros((m, m))
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                adj[k, k + 1] = adj[k + 1, k] = 1.0
            if i + 1 < rows:
                adj[k, k + cols] = adj[k + cols, k] = 1.0
    z = gen.standard_normal((m, size))
    deg = np.maximum(adj.sum(axis=1, keepdims=True), 1.0)
    smooth = 0.5 * z + 0.5 * (adj @ z) / deg
    scale = smooth.std(axis=0, keepdims=True)
    return sd * (smooth - smooth.mean(axis=0, keepdims=True)) / np.where(scale > 0, scale, 1.0)


def _level_effects(levels: int, sticks: int, sd: float, gen: np.random.Generator) -> np.ndarray:
    """Per-level effects with the first (reference) level fixed at zero, shape (levels, sticks)."""
    eff = sd * gen.standard_normal((levels, sticks))
    eff[0] = 0.0
    return eff


def generate_population(config: dict | None = None) -> SyntheticPopulation:
    """Draw a synthetic population and one informative PPS survey from it."""
    cfg = {**DEFAULT_SYNTHPOP, **(config or {})}
    rows, cols = int(cfg["rows"]), int(cfg["cols"])
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise DomainError("the lattice needs at least two areas")
    if cfg["outcome"] not in ("binary", "categorical"):
        raise DomainError(f"unknown outcome '{cfg['outcome']}'")
    categorical = cfg["outcome"] == "categorical"
    groups = int(cfg["groups"])
    if categorical and not 2 <= groups <= 9:
        raise DomainError(f"groups must lie in 2..9, got {groups}")

    root = RngStream(int(cfg["seed"]))
    gen = root.child(0).generator
    m = rows * cols
    areas = area_labels(rows, cols)

    sizes = np.maximum(gen.poisson(cfg["population_size"] / m, size=m), 20)
    area_idx = np.repeat(np.arange(m), sizes)
    N = area_idx.shape[0]
    pop = pd.DataFrame({"unit_id": [f"u{i + 1}" for i in range(N)], "area": np.asarray(areas)[area_idx]})

    sticks = 2 * groups - 1 if categorical else 1
    psi = np.full((N, sticks), float(cfg["intercept"]))
    covariates = tuple(cfg["covariates"])
    for name, n_levels in cfg["covariates"].items():
        n_levels = int(n_levels)
        mix = gen.dirichlet(np.full(n_levels, cfg["dirichlet_concentration"]), size=m)
        # Inverse-CDF draw of each unit's level from its area's mix
        u = gen.random(N)
        codes = (u[:, None] > np.cumsum(mix[area_idx], axis=1)).sum(axis=1)
        codes = np.minimum(codes, n_levels - 1)
        pop[name] = [f"{name}{c + 1}" for c in codes]
        psi += _level_effects(n_levels, sticks, cfg["effect_sd"], gen)[codes]

    psi += _smoothed_effects(rows, cols, cfg["area_sd"], gen, size=sticks)[area_idx]

    if categorical:
        p = stick_inverse(expit(psi))
        u = gen.random(N)
        category = np.minimum((u[:, None] > np.cumsum(p, axis=1)).sum(axis=1), p.shape[1] - 1)
        pop["group"] = [f"g{c // 2 + 1}" for c in category]
        pop["outcome"] = category % 2
    else:
        pop["outcome"] = (gen.random(N) < expit(psi[:, 0])).astype(int)

    log_w = cfg["weight_log_mean"] + cfg["weight_log_sd"] * gen.standard_normal(N)
    pop["raw_weight"] = np.exp(log_w + cfg["weight_outcome_shift"] * pop["outcome"].to_numpy())

    size = size_variable(pop["raw_weight"], pop["outcome"], cfg["gamma"])
    pps = poisson_pps_sample(size, cfg["expected_n"], root.child(1))
    picked = pop.iloc[pps.index]
    survey = pd.DataFrame({
        "unit_id": picked["unit_id"].to_numpy(),
        "response": (
            [f"{g}:{y}" for g, y in zip(picked["group"], picked["outcome"])]
            if categorical else picked["outcome"].to_numpy()
        ),
        "trials": 1,
        "weight": pps.weights,
        "area": picked["area"].to_numpy(),
    })
    for name in covariates:
        survey[name] = picked[name].to_numpy()

    column_order = ["unit_id", "area", *covariates, *(["group"] if categorical else []), "outcome", "raw_weight"]
    pop = pop[column_order]
    frame = PopulationFrame.from_units(pop, covariates)
    logger.info("Synthetic population: %d areas, N=%d, survey n=%d (%s outcome)",
                m, N, len(survey), cfg["outcome"])
    return SyntheticPopulation(
        population=pop,
        frame=frame,
        adjacency=lattice_edges(rows, cols),
        survey=survey,
        covariates=covariates,
    )
