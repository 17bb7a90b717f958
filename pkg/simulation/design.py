"""Informative Poisson probability-proportional-to-size sampling."""

from dataclasses import dataclass

import numpy as np

from errors import DomainError
from sampling.rng import RngStream, as_generator

# Informativeness coefficient, replicates and expected sample size used by default
DEFAULT_SIM = {
    "expected_n": 2000,
    "gamma": 2.0,
    "replicates": 25,
    "seed": 0,
    "failure_threshold": 0.10,
}


@dataclass(frozen=True)
class SimDesign:
    """Sample size target, size-variable informativeness and replicate count."""

    expected_n: float = DEFAULT_SIM["expected_n"]
    gamma: float = DEFAULT_SIM["gamma"]
    replicates: int = DEFAULT_SIM["replicates"]
    seed: int = DEFAULT_SIM["seed"]
    failure_threshold: float = DEFAULT_SIM["failure_threshold"]

    def __post_init__(self):
        if not self.expected_n > 0:
            raise DomainError(f"expected_n must be > 0, got {self.expected_n}")
        if self.replicates < 1:
            raise DomainError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= self.failure_threshold <= 1:
            raise DomainError(f"failure_threshold must lie in [0, 1], got {self.failure_threshold}")

    def check_population(self, size: int) -> None:
        if self.expected_n > size:
            raise DomainError(f"expected_n={self.expected_n} exceeds the population size {size}")


@dataclass(frozen=True, eq=False)
class PpsSample:
    """Selected unit positions with their inclusion probabilities and weights 1 / pi."""

    index: np.ndarray
    pi: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.index.shape[0]


def size_variable(raw_weights, outcome, gamma: float = DEFAULT_SIM["gamma"]) -> np.ndarray:
    """s_i = exp(z_i + gamma * 1[H_i = 0]), z the standardized raw weights."""
    w = np.asarray(raw_weights, dtype=float)
    h = np.asarray(outcome)
    if w.shape != h.shape:
        raise DomainError(f"weights and outcome differ in shape: {w.shape} vs {h.shape}")
    sd = w.std()
    if not sd > 0:
        raise DomainError("raw weights have zero variance; cannot standardize")
    z = (w - w.mean()) / sd
    return np.exp(z + gamma * (h == 0))


def inclusion_probabilities(size, expected_n: float) -> np.ndarray:
    """pi_i = min(1, expected_n * s_i / sum_j s_j)."""
    s = np.asarray(size, dtype=float)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise DomainError("size variable must be positive and finite")
    return np.minimum(1.0, expected_n * s / s.sum())


def poisson_pps_sample(size, expected_n: float, rng: RngStream | np.random.Generator) -> PpsSample:
    """Include each unit independently with probability pi_i."""
    pi = inclusion_probabilities(size, expected_n)
    selected = as_generator(rng).random(pi.shape[0]) < pi
    index = np.flatnonzero(selected)
    return PpsSample(index=index, pi=pi[index], weights=1.0 / pi[index])
