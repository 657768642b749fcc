"""Series least-squares estimates of conditional expectations given (Z, A, X)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, ProjectionError

RCOND_TRIGGER = 1e-12
RIDGE_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class ProjectionModel:
    gram_inverse: np.ndarray
    coefficients: np.ndarray
    ridge_used: float
    rank_flag: bool

    @property
    def k(self) -> int:
        return self.gram_inverse.shape[0]


def _as2d(arr) -> np.ndarray:
    arr = np.asarray(getattr(arr, "values", arr), dtype=float)
    return arr.reshape(arr.shape[0], -1) if arr.ndim != 2 else arr


def fit(phi_design, targets) -> ProjectionModel:
    """Regress each column of ``targets`` on the instrument design.

    Falls back to a ridge of ``1e-8 * tr(G) / k`` when the Gram matrix has
    reciprocal condition number below 1e-12.
    """
    phi = _as2d(phi_design)
    y = np.asarray(targets, dtype=float)
    squeeze = y.ndim == 1
    y = y.reshape(y.shape[0], -1)
    n, k = phi.shape
    if y.shape[0] != n:
        raise DimensionError(f"targets have {y.shape[0]} rows, design has {n}")
    if n <= k:
        raise ProjectionError(f"need n > k_n for the sieve projection (n={n}, k_n={k}); use a smaller instrument sieve")
    gram = phi.T @ phi
    eig = np.linalg.eigvalsh(gram)
    top = eig.max() if eig.size else 0.0
    rcond = eig.min() / top if top > 0 else 0.0
    ridge = 0.0
    rank_flag = False
    if rcond < RCOND_TRIGGER:
        rank_flag = True
        ridge = RIDGE_EPS
        gram = gram + ridge * (np.trace(gram) / k if k else 0.0) * np.eye(k)
    try:
        factor = linalg.cho_factor(gram)
        gram_inv = linalg.cho_solve(factor, np.eye(k))
    except linalg.LinAlgError:
        gram_inv = np.linalg.pinv(gram, hermitian=True)
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    coef = gram_inv @ (phi.T @ y)
    if squeeze:
        coef = coef.reshape(-1)
    return ProjectionModel(gram_inv, coef, ridge, rank_flag)


def predict(model: ProjectionModel, phi_rows) -> np.ndarray:
    phi = _as2d(phi_rows)
    if phi.shape[1] != model.k:
        raise DimensionError(f"design has {phi.shape[1]} columns, model expects {model.k}")
    return phi @ model.coefficients


def cross_operator(phi_design, psi_design) -> np.ndarray:
    """Row i, column m: fitted E[psi_m(W, A, X) | Z_i, A_i, X_i]."""
    phi = _as2d(phi_design)
    psi = _as2d(psi_design)
    if psi.shape[0] != phi.shape[0]:
        raise DimensionError("both designs must come from the same observations")
    return predict(fit(phi, psi), phi)
