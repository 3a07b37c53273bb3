"""Least-squares numerics for the additive latency model."""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from models.errors import FitError
from models.latency import BatchFeatures

DESIGN_COLUMNS = ("n_linear", "n_interactions", "n_cached", "intercept")
CONDITION_LIMIT = 1e3
MAPE_FLOOR_S = 1e-3


@dataclass(frozen=True)
class Solution:
    beta: np.ndarray
    solver: str
    condition_number: float


def design_matrix(features: Sequence[BatchFeatures]) -> np.ndarray:
    X = np.ones((len(features), 4), dtype=np.float64)
    for i, f in enumerate(features):
        X[i, 0] = f.n_linear
        X[i, 1] = f.n_interactions
        X[i, 2] = f.n_cached
    return X


def collinear_columns(X: np.ndarray) -> List[str]:
    """Names of the columns participating in a linear dependency of ``X``."""
    norms = np.linalg.norm(X, axis=0)
    named = [DESIGN_COLUMNS[j] for j in range(X.shape[1]) if norms[j] == 0.0]
    if named:
        return named
    Xs = X / norms
    rank = np.linalg.matrix_rank(Xs)
    if rank == X.shape[1]:
        return []
    # a column is part of the dependency if dropping it leaves the rank unchanged
    involved = []
    for j in range(X.shape[1]):
        reduced = np.delete(Xs, j, axis=1)
        if np.linalg.matrix_rank(reduced) == rank:
            involved.append(DESIGN_COLUMNS[j])
    return involved


def solve(X: np.ndarray, y: np.ndarray) -> Solution:
    """Column-scaled normal equations, with a pivoted QR fallback when ill-conditioned."""
    if X.shape[0] < X.shape[1]:
        raise FitError(f"need at least {X.shape[1]} samples, got {X.shape[0]}", columns=DESIGN_COLUMNS)
    columns = collinear_columns(X)
    if columns:
        raise FitError(f"rank-deficient design; collinear columns: {', '.join(columns)}", columns=columns)

    norms = np.linalg.norm(X, axis=0)
    Xs = X / norms
    singular = np.linalg.svd(Xs, compute_uv=False)
    cond = float(singular[0] / singular[-1])

    if cond <= CONDITION_LIMIT:
        beta_s = np.linalg.solve(Xs.T @ Xs, Xs.T @ y)
        solver = "normal_equations"
    else:
        Q, R, P = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
        z = scipy.linalg.solve_triangular(R, Q.T @ y)
        beta_s = np.empty_like(z)
        beta_s[P] = z
        solver = "pivoted_qr"
    return Solution(beta=beta_s / norms, solver=solver, condition_number=cond)


def r_squared(y: np.ndarray, y_hat: np.ndarray) -> float:
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def adjusted_r_squared(r2: float, n: int, p: int = 3) -> float:
    if n - p - 1 <= 0:
        return r2
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def mape(y: np.ndarray, y_hat: np.ndarray, floor: float = MAPE_FLOOR_S) -> Tuple[float, int]:
    """Mean absolute percentage error over samples with ``|y| >= floor``, plus the excluded count."""
    keep = np.abs(y) >= floor
    excluded = int((~keep).sum())
    if not keep.any():
        return 0.0, excluded
    return float(np.mean(np.abs((y[keep] - y_hat[keep]) / y[keep])) * 100.0), excluded
