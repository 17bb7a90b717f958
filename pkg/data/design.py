"""Survey weight scaling, pseudo-counts and fixed/random-effect design matrices."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import qr
from sklearn.preprocessing import OneHotEncoder

from data.basis import eigen_basis
from data.dataset import SurveyDataset
from errors import DataValidationError, DomainError

INTERCEPT = "intercept"


@dataclass(frozen=True)
class AreaIncidence:
    """Random effects indexed by area: each unit's row is its area's indicator."""


@dataclass(frozen=True, eq=False)
class Eigenbasis:
    """Random effects on the top-``rank`` eigenvectors of the area adjacency.

    ``areas`` labels the rows of ``adjacency``; when omitted the dataset's
    area registry order is assumed.
    """

    rank: int
    adjacency: np.ndarray
    areas: tuple[str, ...] | None = None


BasisChoice = AreaIncidence | Eigenbasis


def scale_weights(raw, n: int | None = None) -> np.ndarray:
    """Scale survey weights to sum to the sample size: w~_i = n * w_i / sum_j w_j."""
    raw = np.asarray(raw, dtype=float)
    if n is None:
        n = raw.shape[0]
    if n != raw.shape[0]:
        raise DomainError(f"sample size {n} does not match {raw.shape[0]} weights")
    if raw.shape[0] == 0:
        raise DomainError("cannot scale an empty weight vector")
    if not np.all(np.isfinite(raw)) or np.any(raw <= 0):
        raise DomainError("survey weights must be positive and finite")
    return n * raw / raw.sum()


def pseudo_counts(y, n_trials, scaled_weights) -> tuple[np.ndarray, np.ndarray]:
    """Weighted binomial pseudo-data: (y * w~, n * w~)."""
    w = np.asarray(scaled_weights, dtype=float)
    return np.asarray(y, dtype=float) * w, np.asarray(n_trials, dtype=float) * w


@dataclass(frozen=True, eq=False)
class DesignSchema:
    """Everything needed to turn (area, covariate levels) into design rows.

    Fixed effects use reference-level dummy coding (first registered level
    dropped) plus an intercept; random-effect rows are looked up per area in
    ``area_basis``.
    """

    covariates: tuple[str, ...]
    factor_levels: dict[str, tuple[str, ...]]
    areas: tuple[str, ...]
    area_basis: np.ndarray
    basis_kind: str
    encoder: OneHotEncoder | None

    @property
    def x_columns(self) -> tuple[str, ...]:
        if self.encoder is None:
            return (INTERCEPT,)
        return (INTERCEPT, *self.encoder.get_feature_names_out(list(self.covariates)))

    @property
    def phi_columns(self) -> tuple[str, ...]:
        if self.basis_kind == "area":
            return tuple(f"area_{a}" for a in self.areas)
        return tuple(f"{self.basis_kind}_{j + 1}" for j in range(self.area_basis.shape[1]))

    @property
    def q(self) -> int:
        return len(self.x_columns)

    @property
    def r(self) -> int:
        return self.area_basis.shape[1]

    def encode_x(self, df: pd.DataFrame) -> np.ndarray:
        """Intercept plus dummy columns for every row of ``df``."""
        intercept = np.ones((len(df), 1))
        if self.encoder is None:
            return intercept
        for cov in self.covariates:
            if cov not in df.columns:
                raise DataValidationError(f"missing covariate column '{cov}'")
            unknown = sorted(set(df[cov].astype(str)) - set(self.factor_levels[cov]))
            if unknown:
                raise DataValidationError(f"covariate '{cov}' has unknown level(s): {unknown}")
        dummies = self.encoder.transform(df[list(self.covariates)].astype(str))
        return np.hstack([intercept, dummies])

    def encode_phi(self, areas) -> np.ndarray:
        """Random-effect rows for a sequence of area ids."""
        index = pd.Index(self.areas)
        pos = index.get_indexer(pd.Series(areas).astype(str))
        if (pos < 0).any():
            unknown = sorted(set(np.asarray(areas, dtype=str)[pos < 0]))
            raise DataValidationError(f"unknown area id(s): {unknown[:10]}")
        return self.area_basis[pos]

    def decode_x(self, x: np.ndarray) -> pd.DataFrame:
        """Recover covariate levels from design rows (inverse of ``encode_x``)."""
        if self.encoder is None:
            return pd.DataFrame(index=range(x.shape[0]))
        levels = self.encoder.inverse_transform(np.asarray(x)[:, 1:])
        return pd.DataFrame(levels, columns=list(self.covariates))


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    """Fixed-effect X (n x q), random-effect Phi (n x r) and scaled weights."""

    X: np.ndarray
    Phi: np.ndarray
    weights: np.ndarray
    schema: DesignSchema | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def r(self) -> int:
        return self.Phi.shape[1]

    @property
    def x_columns(self) -> tuple[str, ...]:
        return self.schema.x_columns if self.schema is not None else ()

    @property
    def phi_columns(self) -> tuple[str, ...]:
        return self.schema.phi_columns if self.schema is not None else ()

    @property
    def D(self) -> np.ndarray:
        """Stacked [X, Phi]."""
        return np.hstack([self.X, self.Phi])

    def subset(self, mask) -> "DesignMatrices":
        """Rows selected by ``mask``; the scaled weights are carried, not rescaled."""
        mask = np.asarray(mask, dtype=bool)
        return DesignMatrices(self.X[mask], self.Phi[mask], self.weights[mask], self.schema)


def make_schema(
    covariates: tuple[str, ...],
    factor_levels: dict[str, tuple[str, ...]],
    areas: tuple[str, ...],
    basis: BasisChoice | None = None,
) -> DesignSchema:
    """Fit the dummy encoder and the per-area random-effect rows."""
    basis = basis or AreaIncidence()

    encoder = None
    if covariates:
        encoder = OneHotEncoder(
            categories=[list(factor_levels[c]) for c in covariates],
            drop="first",
            sparse_output=False,
            handle_unknown="error",
            dtype=float,
        )
        encoder.fit(pd.DataFrame({c: [factor_levels[c][0]] for c in covariates}))

    if isinstance(basis, Eigenbasis):
        basis_areas = tuple(str(a) for a in (basis.areas or areas))
        if len(basis_areas) != np.asarray(basis.adjacency).shape[0]:
            raise DataValidationError(
                f"adjacency has {np.asarray(basis.adjacency).shape[0]} rows "
                f"for {len(basis_areas)} areas"
            )
        unknown = sorted(set(areas) - set(basis_areas))
        if unknown:
            raise DataValidationError(f"area id(s) missing from adjacency: {unknown[:10]}")
        return DesignSchema(
            covariates=tuple(covariates),
            factor_levels=dict(factor_levels),
            areas=basis_areas,
            area_basis=eigen_basis(basis.adjacency, basis.rank),
            basis_kind="eigen",
            encoder=encoder,
        )

    return DesignSchema(
        covariates=tuple(covariates),
        factor_levels=dict(factor_levels),
        areas=tuple(areas),
        area_basis=np.eye(len(areas)),
        basis_kind="area",
        encoder=encoder,
    )


def build_design(data: SurveyDataset, basis: BasisChoice | None = None) -> DesignMatrices:
    """Design matrices and scaled weights for a survey sample."""
    schema = make_schema(data.covariates, data.factor_levels, data.areas, basis)
    X = schema.encode_x(data.units)
    check_full_rank(X, schema.x_columns)
    Phi = schema.encode_phi(data.units["area"])
    return DesignMatrices(X=X, Phi=Phi, weights=scale_weights(data.weights), schema=schema)


def check_full_rank(X: np.ndarray, columns: tuple[str, ...]) -> None:
    """Raise naming the collinear columns when X is column-rank deficient."""
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        _, pivots = qr(X, mode="r", pivoting=True)
        collinear = [columns[j] for j in pivots[rank:]]
        raise DataValidationError(
            f"fixed-effect design is rank deficient ({rank} < {X.shape[1]}); "
            f"collinear column(s): {', '.join(collinear)}"
        )
