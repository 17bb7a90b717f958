"""Persisted fit artifacts and VB checkpoints (joblib)."""

import logging
from pathlib import Path

import joblib
import numpy as np

from errors import DataValidationError
from models.fit import BinomialFit
from models.multinomial import PlMmFit
from models.vb import VbPosterior

logger = logging.getLogger(__name__)

ARTIFACT_NAME = "fit.joblib"
ARTIFACT_VERSION = 1
CHECKPOINT_NAME = "vb_checkpoint.joblib"
CHECKPOINT_HEADER = "plsae-vb-checkpoint"
CHECKPOINT_VERSION = 1


def save_fit(path: Path, fit, schema, family: str, meta: dict | None = None) -> Path:
    """Write a fit (binomial or PL-MM) with the design schema prediction needs."""
    path = Path(path)
    joblib.dump(
        {
            "version": ARTIFACT_VERSION,
            "family": family,
            "fit": fit,
            "schema": schema,
            "meta": dict(meta or {}),
        },
        path,
    )
    logger.info("Saved fit artifact to %s", path)
    return path


def load_fit(path: Path) -> dict:
    """Read a fit artifact, checking its version."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError("fit artifact not found; run `fit` first", source=str(path))
    payload = joblib.load(path)
    if not isinstance(payload, dict) or payload.get("version") != ARTIFACT_VERSION:
        raise DataValidationError(
            f"unsupported fit artifact version {payload.get('version') if isinstance(payload, dict) else None}",
            source=str(path),
        )
    if not isinstance(payload["fit"], (BinomialFit, PlMmFit)):
        raise DataValidationError(f"artifact holds a {type(payload['fit']).__name__}", source=str(path))
    return payload


def save_vb_checkpoint(path: Path, post: VbPosterior) -> Path:
    """Converged (mu, Cholesky factor of Sigma, b_eta, xi) behind a versioned header."""
    path = Path(path)
    joblib.dump(
        {
            "header": CHECKPOINT_HEADER,
            "version": CHECKPOINT_VERSION,
            "mu": post.mu,
            "sigma_chol": post.cholesky(),
            "b_eta": post.b_eta,
            "xi": post.xi,
            "iterations": post.iterations,
            "converged": post.converged,
            "spec": post.spec,
            "x_columns": post.x_columns,
            "phi_columns": post.phi_columns,
        },
        path,
    )
    return path


def load_vb_checkpoint(path: Path) -> VbPosterior:
    path = Path(path)
    payload = joblib.load(path)
    if not isinstance(payload, dict) or payload.get("header") != CHECKPOINT_HEADER:
        raise DataValidationError("not a VB checkpoint", source=str(path))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataValidationError(f"unsupported checkpoint version {payload.get('version')}", source=str(path))
    chol = np.asarray(payload["sigma_chol"])
    return VbPosterior(
        mu=np.asarray(payload["mu"]),
        sigma=chol @ chol.T,
        b_eta=float(payload["b_eta"]),
        xi=np.asarray(payload["xi"]),
        iterations=int(payload["iterations"]),
        converged=bool(payload["converged"]),
        spec=payload["spec"],
        x_columns=tuple(payload["x_columns"]),
        phi_columns=tuple(payload["phi_columns"]),
    )
