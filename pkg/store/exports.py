"""CSV exports of draws, estimates and scoreboards."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from data.load import RUN_HASH_COLUMN, read_table
from errors import DataValidationError
from estimation.poststratify import DomainEstimate, estimates_frame
from models.multinomial import PlMmFit
from models.spec import FitDraws
from simulation.harness import ScoreBoard

logger = logging.getLogger(__name__)

DRAWS_NAME = "draws.csv"
CATEGORIES_NAME = "categories.csv"
ESTIMATES_NAME = "estimates.csv"
SCOREBOARD_NAME = "scoreboard.csv"
SCOREBOARD_DOMAINS_NAME = "scoreboard_domains.csv"
REPLICATE_ESTIMATES_NAME = "replicate_estimates.csv"
REPLICATE_LOG_NAME = "replicates.csv"

_FLOAT_FORMAT = "%.12g"


def write_table(df: pd.DataFrame, path: Path, digest: str) -> Path:
    """UTF-8, comma-separated, fixed column order, run hash as the last column."""
    path = Path(path)
    out = df.copy()
    out[RUN_HASH_COLUMN] = digest
    out.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format=_FLOAT_FORMAT)
    logger.info("Wrote %s (%d rows)", path, len(out))
    return path


def draws_frame(draws: FitDraws) -> pd.DataFrame:
    df = draws.to_frame()
    df.insert(0, "draw", np.arange(1, draws.n_draws + 1))
    return df


def stick_draws_name(k: int) -> str:
    return f"draws_stick{k}.csv"


def write_draws(fit, out_dir: Path, digest: str) -> list[Path]:
    """Draw exports: one file for a binomial fit, one per stick plus the category order for PL-MM."""
    out_dir = Path(out_dir)
    if isinstance(fit, PlMmFit):
        paths = [
            write_table(draws_frame(sub.draws), out_dir / stick_draws_name(k + 1), digest)
            for k, sub in enumerate(fit.sub_fits)
        ]
        order = pd.DataFrame({
            "position": np.arange(1, fit.K + 1),
            "category": list(fit.categories),
            "stick": [str(k + 1) if k < fit.K - 1 else "reference" for k in range(fit.K)],
        })
        paths.append(write_table(order, out_dir / CATEGORIES_NAME, digest))
        return paths
    draws = fit.draws if hasattr(fit, "draws") else fit
    return [write_table(draws_frame(draws), out_dir / DRAWS_NAME, digest)]


def read_draws(path: Path, meta: dict | None = None) -> FitDraws:
    """Read a draw export written by either engine back into FitDraws."""
    df = read_table(path)
    if "sigma2_eta" not in df.columns:
        raise DataValidationError("not a draw export: no sigma2_eta column", source=str(path))
    try:
        numeric = df.drop(columns=["draw"], errors="ignore").astype(float)
    except ValueError as exc:
        raise DataValidationError(f"non-numeric draw values: {exc}", source=str(path)) from exc
    return FitDraws.from_frame(numeric, meta)


def write_estimates(estimates: list[DomainEstimate], path: Path, digest: str) -> Path:
    return write_table(estimates_frame(estimates), path, digest)


def write_scoreboard(board: ScoreBoard, out_dir: Path, digest: str) -> list[Path]:
    """Scoreboard (estimator x metric), per-domain long format and replicate estimates."""
    out_dir = Path(out_dir)
    return [
        write_table(board.summary, out_dir / SCOREBOARD_NAME, digest),
        write_table(board.per_domain, out_dir / SCOREBOARD_DOMAINS_NAME, digest),
        write_table(board.results, out_dir / REPLICATE_ESTIMATES_NAME, digest),
    ]


def write_replicate_log(board: ScoreBoard, out_dir: Path, digest: str) -> Path:
    return write_table(board.replicates, Path(out_dir) / REPLICATE_LOG_NAME, digest)
