"""Survey sample and population frame containers."""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import DataValidationError

FAMILIES = ("binomial", "multinomial")


@dataclass(frozen=True)
class SurveyUnit:
    """One sampled unit: response, trials, survey weight, area and covariate levels."""

    unit_id: str
    response: int | str
    trials: int
    weight: float
    area: str
    covariates: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SurveyDataset:
    """An immutable, validated survey sample.

    ``units`` holds one row per unit with columns unit_id, response, trials,
    weight, area and one column per covariate. ``factor_levels`` and ``areas``
    are the registries the design matrices are built against; they may hold
    levels and areas that no sampled unit carries.
    """

    units: pd.DataFrame
    covariates: tuple[str, ...]
    factor_levels: dict[str, tuple[str, ...]]
    areas: tuple[str, ...]
    family: str = "binomial"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        units = self.units
        if len(units) == 0:
            raise DataValidationError("survey dataset is empty")
        if self.family not in FAMILIES:
            raise DataValidationError(f"unknown family '{self.family}', expected one of {FAMILIES}")

        missing = [c for c in self.covariates if c not in units.columns]
        if missing:
            raise DataValidationError(f"units lack covariate column(s): {', '.join(missing)}")

        for cov in self.covariates:
            levels = self.factor_levels.get(cov)
            if levels is None:
                raise DataValidationError(f"no factor registry for covariate '{cov}'")
            unknown = sorted(set(units[cov]) - set(levels))
            if unknown:
                raise DataValidationError(f"covariate '{cov}' has unregistered level(s): {unknown}")

        unknown_areas = sorted(set(units["area"]) - set(self.areas))
        if unknown_areas:
            raise DataValidationError(f"unknown area id(s): {unknown_areas[:10]}")

        if (units["weight"] <= 0).any() or not np.isfinite(units["weight"]).all():
            raise DataValidationError("survey weights must be positive and finite")
        if (units["trials"] <= 0).any():
            raise DataValidationError("trials must be positive integers")

        if self.family == "binomial":
            bad = (units["response"] < 0) | (units["response"] > units["trials"])
            if bad.any():
                raise DataValidationError("binomial responses must satisfy 0 <= response <= trials")
        else:
            if (units["trials"] != 1).any():
                raise DataValidationError("categorical responses require trials == 1")
            if len(self.categories) < 2:
                raise DataValidationError("multinomial family needs at least two categories")
            unknown = sorted(set(units["response"]) - set(self.categories))
            if unknown:
                raise DataValidationError(f"response has unregistered categories: {unknown}")

    @classmethod
    def from_frame(
        cls,
        units: pd.DataFrame,
        covariates: tuple[str, ...],
        areas: tuple[str, ...] | None = None,
        factor_levels: dict[str, tuple[str, ...]] | None = None,
        family: str = "binomial",
        categories: tuple[str, ...] | None = None,
    ) -> "SurveyDataset":
        """Build a dataset, filling any registry not given from sorted observed values."""
        units = units.reset_index(drop=True).copy()
        # Levels, areas and category labels are compared as text
        for col in ("area", *covariates):
            units[col] = units[col].astype(str)
        if family == "multinomial":
            units["response"] = units["response"].astype(str)
        levels = dict(factor_levels or {})
        for cov in covariates:
            if cov not in levels and cov in units.columns:
                levels[cov] = tuple(sorted(units[cov].astype(str).unique()))
        if areas is None:
            areas = tuple(sorted(units["area"].astype(str).unique()))
        if family == "multinomial" and not categories:
            categories = tuple(sorted(units["response"].astype(str).unique()))
        return cls(
            units=units,
            covariates=tuple(covariates),
            factor_levels={c: tuple(levels[c]) for c in covariates if c in levels},
            areas=tuple(areas),
            family=family,
            categories=tuple(categories or ()),
        )

    @classmethod
    def from_units(cls, units: list[SurveyUnit], **kwargs) -> "SurveyDataset":
        """Build a dataset from SurveyUnit records sharing one covariate schema."""
        if not units:
            raise DataValidationError("survey dataset is empty")
        covariates = tuple(units[0].covariates)
        if any(tuple(u.covariates) != covariates for u in units):
            raise DataValidationError("all units must share the same covariate schema")
        df = pd.DataFrame([
            {
                "unit_id": u.unit_id,
                "response": u.response,
                "trials": u.trials,
                "weight": float(u.weight),
                "area": u.area,
                **u.covariates,
            }
            for u in units
        ])
        return cls.from_frame(df, covariates=covariates, **kwargs)

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def trials(self) -> np.ndarray:
        return self.units["trials"].to_numpy(dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return self.units["weight"].to_numpy(dtype=float)

    def responses(self) -> np.ndarray:
        """Binomial success counts."""
        if self.family != "binomial":
            raise DataValidationError("responses() is defined for the binomial family only")
        return self.units["response"].to_numpy(dtype=float)

    def category_counts(self) -> np.ndarray:
        """n x K count matrix of categorical responses, columns in ``categories`` order."""
        if self.family != "multinomial":
            raise DataValidationError("category_counts() is defined for the multinomial family only")
        codes = pd.Categorical(self.units["response"], categories=list(self.categories)).codes
        counts = np.zeros((self.n, len(self.categories)))
        counts[np.arange(self.n), codes] = 1.0
        return counts

    def subset(self, mask) -> "SurveyDataset":
        """Units selected by a boolean mask, keeping every registry."""
        return SurveyDataset(
            units=self.units.loc[np.asarray(mask, dtype=bool)].reset_index(drop=True),
            covariates=self.covariates,
            factor_levels=self.factor_levels,
            areas=self.areas,
            family=self.family,
            categories=self.categories,
        )


@dataclass(frozen=True, eq=False)
class PopulationFrame:
    """Poststratification cells: area, covariate levels and population count."""

    cells: pd.DataFrame
    covariates: tuple[str, ...]

    def __post_init__(self):
        missing = [c for c in ("area", "count", *self.covariates) if c not in self.cells.columns]
        if missing:
            raise DataValidationError(f"population frame lacks column(s): {', '.join(missing)}")
        counts = self.cells["count"]
        if (counts < 0).any() or (counts != np.round(counts)).any():
            raise DataValidationError("cell counts must be nonnegative integers")

    @classmethod
    def from_units(cls, population: pd.DataFrame, covariates: tuple[str, ...]) -> "PopulationFrame":
        """Aggregate a unit-level population into cells."""
        keys = ["area", *covariates]
        cells = population.groupby(keys, sort=True).size().rename("count").reset_index()
        return cls(cells=cells, covariates=tuple(covariates))

    @property
    def total(self) -> int:
        return int(self.cells["count"].sum())

    @property
    def counts(self) -> np.ndarray:
        return self.cells["count"].to_numpy(dtype=float)

    def check_schema(self, covariates: tuple[str, ...]) -> None:
        """Raise listing covariates that differ between the frame and a fitted design."""
        extra = sorted(set(self.covariates) - set(covariates))
        absent = sorted(set(covariates) - set(self.covariates))
        if extra or absent:
            raise DataValidationError(
                "population frame covariates do not match the fitted design: "
                f"missing from frame {absent}, not in design {extra}"
            )
