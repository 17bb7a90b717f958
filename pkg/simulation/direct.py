"""Design-based direct estimators of domain proportions."""

import numpy as np
import pandas as pd

from errors import DomainError

DIRECT_COLUMNS = ["domain", "n", "weighted", "unweighted", "variance", "se"]


def direct_estimates(sample: pd.DataFrame, domain: str | list[str] | None = "area",
                     outcome: str = "y", weight: str = "weight", pi: str = "pi",
                     domains=None) -> pd.DataFrame:
    """Weighted (Hajek ratio) and unweighted proportions per domain.

    The weighted estimator's variance is the ratio-linearized Poisson-sampling
    form sum (1 - pi_i) w_i^2 (y_i - p_hat)^2 / (sum w_i)^2; without a ``pi``
    column the finite-population factor is dropped. Domains listed in
    ``domains`` with no sampled units come back with n = 0 and NaN estimates.
    """
    keys = [domain] if isinstance(domain, str) else list(domain or [])
    for col in [*keys, outcome, weight]:
        if col not in sample.columns:
            raise DomainError(f"sample has no '{col}' column")

    df = sample.copy()
    w = df[weight].to_numpy(dtype=float)
    if np.any(w <= 0):
        raise DomainError("direct estimators need positive weights")
    df["_dom"] = df[keys].astype(str).agg(":".join, axis=1) if keys else "all"
    df["_wy"] = w * df[outcome].to_numpy(dtype=float)
    df["_fpc"] = 1.0 - df[pi].to_numpy(dtype=float) if pi in df.columns else 1.0

    rows = []
    for dom, g in df.groupby("_dom", sort=True):
        wg = g[weight].to_numpy(dtype=float)
        yg = g[outcome].to_numpy(dtype=float)
        total = wg.sum()
        p_hat = g["_wy"].sum() / total
        var = float(np.sum(g["_fpc"].to_numpy() * wg**2 * (yg - p_hat) ** 2) / total**2)
        rows.append({
            "domain": dom,
            "n": len(g),
            "weighted": p_hat,
            "unweighted": float(yg.mean()),
            "variance": var,
            "se": float(np.sqrt(var)),
        })
    out = pd.DataFrame(rows, columns=DIRECT_COLUMNS)

    if domains is not None:
        full = pd.DataFrame({"domain": [str(d) for d in domains]})
        out = full.merge(out, on="domain", how="left")
        out["n"] = out["n"].fillna(0).astype(int)
    return out.reset_index(drop=True)
