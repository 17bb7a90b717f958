"""Model hyperparameters, engine configuration and posterior draw containers."""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from errors import DomainError

# Vague priors used throughout: sigma2_beta = 1000, a = b = 0.5
DEFAULT_MODEL = {
    "sigma2_beta": 1000.0,
    "a": 0.5,
    "b": 0.5,
}

DEFAULT_MCMC = {
    "burnin": 1000,
    "retained": 1000,
    "thin": 1,
    "seed": 0,
    "chain": 0,
    "chunk_size": 4096,
    "n_jobs": 1,
    "truncation": 200,
    "progress": False,
}

DEFAULT_VB = {
    "tol": 1e-6,
    "max_iter": 1000,
    "draws": 1000,
    "seed": 0,
}

SIGMA2_ETA = "sigma2_eta"


@dataclass(frozen=True)
class PlMbModelSpec:
    """Priors of the pseudo-likelihood mixed binomial model.

    beta ~ N(0, sigma2_beta I_q), eta | sigma2_eta ~ N(0, sigma2_eta I_r),
    sigma2_eta ~ IG(a, b). ``q`` and ``r`` are filled from the design by
    ``resolve``.
    """

    sigma2_beta: float = DEFAULT_MODEL["sigma2_beta"]
    a: float = DEFAULT_MODEL["a"]
    b: float = DEFAULT_MODEL["b"]
    q: int | None = None
    r: int | None = None

    def __post_init__(self):
        for name in ("sigma2_beta", "a", "b"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be > 0, got {value}")

    def resolve(self, q: int, r: int) -> "PlMbModelSpec":
        """Fill (or check) the fixed- and random-effect dimensions."""
        if self.q is not None and self.q != q:
            raise DomainError(f"model spec has q={self.q} but the design has {q} columns")
        if self.r is not None and self.r != r:
            raise DomainError(f"model spec has r={self.r} but the design has {r} columns")
        return replace(self, q=q, r=r)


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length, thinning and randomness for the Gibbs engine."""

    burnin: int = DEFAULT_MCMC["burnin"]
    retained: int = DEFAULT_MCMC["retained"]
    thin: int = DEFAULT_MCMC["thin"]
    seed: int = DEFAULT_MCMC["seed"]
    chain: int = DEFAULT_MCMC["chain"]
    chunk_size: int = DEFAULT_MCMC["chunk_size"]
    n_jobs: int = DEFAULT_MCMC["n_jobs"]
    truncation: int = DEFAULT_MCMC["truncation"]
    progress: bool = DEFAULT_MCMC["progress"]

    def __post_init__(self):
        if self.burnin < 0:
            raise DomainError(f"burnin must be >= 0, got {self.burnin}")
        if self.retained < 1:
            raise DomainError(f"retained must be >= 1, got {self.retained}")
        if self.thin < 1:
            raise DomainError(f"thin must be >= 1, got {self.thin}")
        if self.chunk_size < 1:
            raise DomainError(f"chunk_size must be >= 1, got {self.chunk_size}")


@dataclass(frozen=True)
class VbConfig:
    """Stopping rule and draw count for the variational engine."""

    tol: float = DEFAULT_VB["tol"]
    max_iter: int = DEFAULT_VB["max_iter"]
    draws: int = DEFAULT_VB["draws"]
    seed: int = DEFAULT_VB["seed"]

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.draws < 1:
            raise DomainError(f"draws must be >= 1, got {self.draws}")


@dataclass(frozen=True, eq=False)
class FitDraws:
    """Retained posterior (or variational-posterior) draws of beta, eta and sigma2_eta."""

    beta: np.ndarray
    eta: np.ndarray
    sigma2_eta: np.ndarray
    x_columns: tuple[str, ...] = ()
    phi_columns: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.beta.shape[0]
        if self.eta.shape[0] != m or self.sigma2_eta.shape[0] != m:
            raise DomainError("beta, eta and sigma2_eta must hold the same number of draws")
        if not self.x_columns:
            object.__setattr__(self, "x_columns", tuple(f"x{j + 1}" for j in range(self.beta.shape[1])))
        if not self.phi_columns:
            object.__setattr__(self, "phi_columns", tuple(f"phi{j + 1}" for j in range(self.eta.shape[1])))

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def linear_predictor(self, X: np.ndarray, Phi: np.ndarray) -> np.ndarray:
        """Per-draw linear predictors, shape (draws, rows)."""
        return self.beta @ np.asarray(X).T + self.eta @ np.asarray(Phi).T

    def to_frame(self) -> pd.DataFrame:
        """One row per retained draw: beta_*, eta_*, sigma2_eta."""
        data = {}
        for j, name in enumerate(self.x_columns):
            data[f"beta_{name}"] = self.beta[:, j]
        for j, name in enumerate(self.phi_columns):
            data[f"eta_{name}"] = self.eta[:, j]
        data[SIGMA2_ETA] = self.sigma2_eta
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, meta: dict | None = None) -> "FitDraws":
        """Inverse of ``to_frame``; unrelated columns (e.g. run_hash) are ignored."""
        beta_cols = [c for c in df.columns if c.startswith("beta_")]
        eta_cols = [c for c in df.columns if c.startswith("eta_")]
        return cls(
            beta=df[beta_cols].to_numpy(dtype=float),
            eta=df[eta_cols].to_numpy(dtype=float).reshape(len(df), len(eta_cols)),
            sigma2_eta=df[SIGMA2_ETA].to_numpy(dtype=float),
            x_columns=tuple(c[len("beta_"):] for c in beta_cols),
            phi_columns=tuple(c[len("eta_"):] for c in eta_cols),
            meta=dict(meta or {}),
        )
