"""Representer estimation and the debiasing correction for the plug-in mean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import QuadraticCriterion, SieveData, _arm_mask

RANGE_TOL = 1e-8
RIDGE_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class RepresenterEstimate:
    beta_g: np.ndarray
    r_value: float
    degenerate_flag: bool
    range_residual: float


def assemble_representer_criterion(sieve: SieveData, a: int) -> QuadraticCriterion:
    """R_n(h) = (1/n) sum 1[A_i=a] E_n{h | Z_i, A_i, X_i}^2 - (2/n) sum h(W_i, a, X_i).

    The linear term averages the bridge design with every A set to ``a``;
    the constant is zero.
    """
    mask = _arm_mask(sieve.a, a)
    ph = sieve.psi_hat * mask[:, None]
    n = sieve.n
    return QuadraticCriterion(ph.T @ ph / n, sieve.psi_arm[a].sum(axis=0) / n, 0.0, n, a, "representer")


def estimate_representer(Q_r: QuadraticCriterion) -> RepresenterEstimate:
    """Minimise R_n.  If the linear term leaves the column space of G the
    criterion is unbounded below; we then ridge it and flag the result."""
    G, g = Q_r.G, Q_r.g
    pinv = np.linalg.pinv(G, rcond=1e-10, hermitian=True)
    beta = pinv @ g
    gnorm = float(np.linalg.norm(g))
    resid = float(np.linalg.norm(G @ beta - g)) / gnorm if gnorm > 0 else 0.0
    degenerate = resid > RANGE_TOL
    if degenerate:
        eps = RIDGE_EPS * np.trace(G) / max(Q_r.p, 1)
        beta = np.linalg.solve(G + eps * np.eye(Q_r.p), g)
    return RepresenterEstimate(beta, Q_r.value(beta), bool(degenerate), resid)


def residuals(sieve: SieveData, h_beta) -> np.ndarray:
    """e_n(Z_i, A_i, X_i, h) = fitted E[Y - h(W, A, X) | Z_i, A_i, X_i]."""
    return sieve.y_hat - sieve.psi_hat @ np.asarray(h_beta, dtype=float)


def projected_representer(sieve: SieveData, g_beta, a: int) -> np.ndarray:
    """1[A_i = a] * fitted E{g(W, A, X) | Z_i, A_i, X_i}."""
    return (sieve.a == a) * (sieve.psi_hat @ np.asarray(g_beta, dtype=float))


def debias_correction(sieve: SieveData, g_beta, h_beta, a: int) -> float:
    """r_n = (1/n) sum 1[A_i=a] E_n{g | A_i, Z_i, X_i} e_n(Z_i, A_i, X_i, h)."""
    return float(np.mean(projected_representer(sieve, g_beta, a) * residuals(sieve, h_beta)))
