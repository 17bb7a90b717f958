"""Load and validate survey, population and adjacency files (CSV or XLSX)."""

import logging
from pathlib import Path

import pandas as pd

from data.dataset import PopulationFrame, SurveyDataset
from errors import DataValidationError

logger = logging.getLogger(__name__)

# Positional layout: these named columns first, covariates after
SURVEY_COLUMNS = ("unit_id", "response", "trials", "weight", "area")
FRAME_COLUMNS = ("area", "count")
ADJACENCY_COLUMNS = ("area_a", "area_b")

# Provenance column on every table this package writes; ignored on read
RUN_HASH_COLUMN = "run_hash"

# Header row is line 1, so data row i sits on line i + 2
_FIRST_DATA_LINE = 2


def _is_xlsx(path: Path) -> bool:
    """Check if a file is actually XLSX by reading magic bytes."""
    with open(path, "rb") as f:
        return f.read(4) == b"PK\x03\x04"


def read_table(path: str | Path) -> pd.DataFrame:
    """Read a CSV (or XLSX masquerading as one) with every cell kept as text."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file does not exist", source=str(path))

    if _is_xlsx(path):
        df = pd.read_excel(path, engine="openpyxl", dtype=str, keep_default_na=False)
    else:
        df = pd.read_csv(path, encoding="utf-8-sig", dtype=str, keep_default_na=False)

    # Drop trailing unnamed empty columns
    unnamed_cols = [c for c in df.columns if str(c).startswith("Unnamed")]
    if unnamed_cols:
        df = df.drop(columns=unnamed_cols)

    df.columns = [str(c).strip() for c in df.columns]
    df = df.drop(columns=[RUN_HASH_COLUMN], errors="ignore")
    return df.apply(lambda col: col.str.strip())


def _require_columns(df: pd.DataFrame, required: tuple[str, ...], source: str) -> None:
    """Raise naming every required column the table lacks."""
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataValidationError(
            f"missing required column(s): {', '.join(missing)}; found {list(df.columns)}",
            source=source,
            line=1,
        )


def _reject_blanks(df: pd.DataFrame, columns, source: str) -> None:
    """Missing values are rejected, never imputed."""
    for col in columns:
        blank = df[col] == ""
        if blank.any():
            row = int(blank.to_numpy().nonzero()[0][0])
            raise DataValidationError(
                f"missing value in column '{col}'", source=source, line=row + _FIRST_DATA_LINE
            )


def _to_number(df: pd.DataFrame, col: str, source: str, integer: bool = False) -> pd.Series:
    """Parse a numeric column, pointing at the first unparseable line."""
    values = pd.to_numeric(df[col], errors="coerce")
    bad = values.isna()
    if integer:
        bad |= values.notna() & (values != values.round())
    if bad.any():
        row = int(bad.to_numpy().nonzero()[0][0])
        kind = "an integer" if integer else "a number"
        raise DataValidationError(
            f"column '{col}' value {df[col].iloc[row]!r} is not {kind}",
            source=source,
            line=row + _FIRST_DATA_LINE,
        )
    return values.astype("int64") if integer else values.astype(float)


def load_survey(
    path: str | Path,
    family: str = "binomial",
    areas: tuple[str, ...] | None = None,
    factor_levels: dict[str, tuple[str, ...]] | None = None,
    categories: tuple[str, ...] | None = None,
) -> SurveyDataset:
    """Load a unit-level survey file into a validated SurveyDataset.

    Columns: unit_id, response, trials, weight, area, then one column per
    categorical covariate. For ``family="multinomial"`` the response is a
    category label and trials must be 1.
    """
    source = str(path)
    df = read_table(path)
    _require_columns(df, SURVEY_COLUMNS, source)
    covariates = tuple(c for c in df.columns if c not in SURVEY_COLUMNS)
    _reject_blanks(df, SURVEY_COLUMNS + covariates, source)

    units = pd.DataFrame({"unit_id": df["unit_id"], "area": df["area"]})
    if family == "multinomial":
        units["response"] = df["response"]
    else:
        units["response"] = _to_number(df, "response", source, integer=True)
    units["trials"] = _to_number(df, "trials", source, integer=True)
    units["weight"] = _to_number(df, "weight", source)
    for cov in covariates:
        units[cov] = df[cov]

    try:
        dataset = SurveyDataset.from_frame(
            units,
            covariates=covariates,
            areas=areas,
            factor_levels=factor_levels,
            family=family,
            categories=categories,
        )
    except DataValidationError as exc:
        raise DataValidationError(str(exc), source=source) from exc

    logger.info("Loaded survey %s: %d units, %d covariates, %d areas",
                source, dataset.n, len(covariates), len(dataset.areas))
    return dataset


def load_population(path: str | Path) -> PopulationFrame:
    """Load a poststratification frame: area, covariates, count."""
    source = str(path)
    df = read_table(path)
    _require_columns(df, FRAME_COLUMNS, source)
    covariates = tuple(c for c in df.columns if c not in FRAME_COLUMNS)
    _reject_blanks(df, FRAME_COLUMNS + covariates, source)

    cells = df[["area", *covariates]].copy()
    cells["count"] = _to_number(df, "count", source, integer=True)
    try:
        frame = PopulationFrame(cells=cells, covariates=covariates)
    except DataValidationError as exc:
        raise DataValidationError(str(exc), source=source) from exc

    logger.info("Loaded population frame %s: %d cells, N=%d",
                source, len(cells), int(cells["count"].sum()))
    return frame


def load_adjacency(path: str | Path) -> pd.DataFrame:
    """Load an area edge list with columns area_a, area_b."""
    source = str(path)
    df = read_table(path)
    _require_columns(df, ADJACENCY_COLUMNS, source)
    _reject_blanks(df, ADJACENCY_COLUMNS, source)
    logger.info("Loaded adjacency %s: %d edges", source, len(df))
    return df[list(ADJACENCY_COLUMNS)].reset_index(drop=True)


def load_population_units(path: str | Path, covariates: tuple[str, ...] | None = None) -> pd.DataFrame:
    """Load a unit-level population (as written by synthpop) for simulation.

    Required columns: unit_id, area, raw_weight, outcome; ``category`` and
    ``group`` are optional (categorical outcomes). Remaining columns are
    covariates unless ``covariates`` is given.
    """
    source = str(path)
    df = read_table(path)
    _require_columns(df, ("unit_id", "area", "raw_weight", "outcome"), source)
    reserved = {"unit_id", "area", "raw_weight", "outcome", "category", "group"}
    if covariates is None:
        covariates = tuple(c for c in df.columns if c not in reserved)
    _reject_blanks(df, ["unit_id", "area", "raw_weight", "outcome", *covariates], source)

    out = df.copy()
    out["raw_weight"] = _to_number(df, "raw_weight", source)
    out["outcome"] = _to_number(df, "outcome", source, integer=True)
    out.attrs["covariates"] = tuple(covariates)
    return out
