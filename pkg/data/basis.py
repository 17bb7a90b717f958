"""Area adjacency matrices and their eigenvector spatial bases."""

from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import eigh

from errors import DataValidationError, DomainError

# Entries at or below this magnitude count as zero for the sign convention
_SIGN_TOL = 1e-12


def adjacency_matrix(edges: pd.DataFrame, areas: Sequence[str]) -> np.ndarray:
    """Symmetric 0/1 adjacency over ``areas`` from an area_a, area_b edge list."""
    index = {str(a): i for i, a in enumerate(areas)}
    unknown = sorted(
        (set(edges["area_a"].astype(str)) | set(edges["area_b"].astype(str))) - set(index)
    )
    if unknown:
        raise DataValidationError(f"adjacency references unknown area(s): {unknown[:10]}")

    adj = np.zeros((len(index), len(index)))
    rows = edges["area_a"].astype(str).map(index).to_numpy()
    cols = edges["area_b"].astype(str).map(index).to_numpy()
    adj[rows, cols] = 1.0
    adj[cols, rows] = 1.0
    # Self loops are not neighbours
    np.fill_diagonal(adj, 0.0)
    return adj


def eigen_basis(adjacency: np.ndarray, rank: int) -> np.ndarray:
    """Orthonormal eigenvectors of the ``rank`` algebraically largest eigenvalues.

    Columns are ordered by decreasing eigenvalue and signed so that each
    column's first nonzero entry is positive.
    """
    adj = np.asarray(adjacency, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DomainError(f"adjacency must be square, got shape {adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise DomainError("adjacency matrix is not symmetric")
    if np.any(np.diag(adj) != 0):
        raise DomainError("adjacency matrix must have a zero diagonal")
    m = adj.shape[0]
    if not 1 <= rank <= m:
        raise DomainError(f"basis rank must satisfy 1 <= r <= {m}, got {rank}")

    _, vectors = eigh(adj, subset_by_index=[m - rank, m - 1])
    basis = vectors[:, ::-1].copy()

    for j in range(rank):
        nonzero = np.flatnonzero(np.abs(basis[:, j]) > _SIGN_TOL)
        if nonzero.size and basis[nonzero[0], j] < 0:
            basis[:, j] = -basis[:, j]
    return basis
