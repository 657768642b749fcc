"""Solution-set estimation for the outcome bridge and min-length selection.

The sample criterion C_n is an exact quadratic form in the sieve
coefficients, so the estimated solution set is an ellipsoidal sublevel set
and picking its smallest-M_n member is a convex QCQP with one constraint,
solved here by bisection on the Lagrange multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import projection
from .basis import BasisSet, evaluate
from .data import Dataset
from .errors import DimensionError, SelectionError

M_RIDGE = 1e-10
PINV_RCOND = 1e-10
MAX_DOUBLINGS = 60


@dataclass(frozen=True, eq=False)
class SieveData:
    """Designs and first-stage projections shared by every criterion."""

    phi: np.ndarray  # instrument design, n x k
    psi: np.ndarray  # bridge design at observed arms, n x m
    psi_arm: tuple[np.ndarray, np.ndarray]  # bridge design with A overridden to 0 / 1
    a: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray  # fitted E[Y | Z, A, X]
    psi_hat: np.ndarray  # fitted E[psi(W, A, X) | Z, A, X]
    model: projection.ProjectionModel

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return int(self.phi.shape[1])

    @property
    def m(self) -> int:
        return int(self.psi.shape[1])


def prepare(dataset: Dataset, psi_basis: BasisSet, phi_basis: BasisSet) -> SieveData:
    phi = evaluate(phi_basis, dataset).values
    psi = evaluate(psi_basis, dataset).values
    psi0 = evaluate(psi_basis, dataset, override_arm=0).values
    psi1 = evaluate(psi_basis, dataset, override_arm=1).values
    model = projection.fit(phi, np.column_stack([dataset.y, psi]))
    fitted = phi @ model.coefficients
    return SieveData(phi, psi, (psi0, psi1), dataset.a, dataset.y, fitted[:, 0], fitted[:, 1:], model)


@dataclass(frozen=True, eq=False)
class QuadraticCriterion:
    """Q(beta) = beta' G beta - 2 g' beta + c."""

    G: np.ndarray
    g: np.ndarray
    c: float
    n: int
    arm: int | str
    kind: str

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        g = np.asarray(self.g, dtype=float).reshape(-1)
        if G.shape != (g.size, g.size):
            raise DimensionError(f"G is {G.shape}, g has {g.size} entries")
        object.__setattr__(self, "G", 0.5 * (G + G.T))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c", float(self.c))

    @property
    def p(self) -> int:
        return self.g.size

    def value(self, beta) -> np.ndarray | float:
        b = np.asarray(beta, dtype=float)
        if b.ndim == 1:
            return float(b @ self.G @ b - 2.0 * self.g @ b + self.c)
        return np.einsum("ij,jk,ik->i", b, self.G, b) - 2.0 * b @ self.g + self.c


def _arm_mask(a: np.ndarray, arm) -> np.ndarray:
    if arm == "both":
        return np.ones(a.shape[0])
    if arm not in (0, 1):
        raise ValueError(f"arm must be 0, 1 or 'both', got {arm!r}")
    mask = (a == arm).astype(float)
    if not mask.any():
        raise SelectionError(f"no observations in arm {arm}")
    return mask


def assemble_outcome_criterion(sieve: SieveData, arm=0) -> QuadraticCriterion:
    """C_n over bridge coefficients; ``arm`` restricts the average to one arm."""
    mask = _arm_mask(sieve.a, arm)
    ph = sieve.psi_hat * mask[:, None]
    yh = sieve.y_hat * mask
    n = sieve.n
    return QuadraticCriterion(ph.T @ ph / n, ph.T @ yh / n, yh @ yh / n, n, arm, "outcome")


def criterion_by_loop(sieve: SieveData, beta, arm=0) -> float:
    """C_n evaluated observation by observation (reference for tests)."""
    mask = _arm_mask(sieve.a, arm)
    resid = sieve.y_hat - sieve.psi_hat @ np.asarray(beta, dtype=float)
    return float(np.mean(mask * resid**2))


def minimize_criterion(Q: QuadraticCriterion) -> tuple[np.ndarray, float]:
    """Minimum-Euclidean-norm minimiser G^+ g and the minimum value."""
    beta = np.linalg.pinv(Q.G, rcond=PINV_RCOND, hermitian=True) @ Q.g
    c_min = Q.value(beta)
    if c_min < 0:
        if c_min < -1e-10 * max(1.0, abs(Q.c)):
            raise SelectionError(f"criterion minimum is negative ({c_min:.3e}); G is not PSD")
        c_min = 0.0
    return beta, c_min


def choose_threshold(c_min: float, n: int, k_n: int, kappa: float = 1.0) -> float:
    """c_n = c_min + kappa * k_n * log(n) / n."""
    if kappa < 0:
        raise SelectionError(f"kappa must be non-negative, got {kappa!r}")
    if c_min < 0:
        raise SelectionError("c_min must be non-negative")
    return c_min + kappa * k_n * math.log(n) / n


def membership(beta, Q: QuadraticCriterion, c_n: float) -> bool:
    return Q.value(beta) <= c_n + 1e-12


@dataclass(frozen=True, eq=False)
class SelectionWeights:
    """M_n(h) = (1/n) sum h(W_i, A_i, X_i)^2 as beta' matrix beta."""

    matrix: np.ndarray
    ridge: float


def selection_weights(psi) -> SelectionWeights:
    psi = np.asarray(getattr(psi, "values", psi), dtype=float)
    n, p = psi.shape
    base = psi.T @ psi / n
    ridge = M_RIDGE * np.trace(base) / p if p else 0.0
    if ridge <= 0:
        ridge = M_RIDGE
    return SelectionWeights(base + ridge * np.eye(p), ridge)


@dataclass(frozen=True, eq=False)
class BridgeEstimate:
    beta: np.ndarray
    c_min: float
    c_n: float
    m_value: float
    lagrange_multiplier: float
    feasible: bool
    flags: tuple[str, ...] = ()


def select_min_norm(Q: QuadraticCriterion, c_n: float, M: SelectionWeights, *, c_min: float | None = None) -> BridgeEstimate:
    """argmin beta' M beta subject to Q(beta) <= c_n.

    In whitened coordinates (M = L L') the KKT path is
    gamma(lam) = (I + lam S)^-1 lam b along the eigenvectors of
    L^-1 G L^-T, and Q(lam) decreases monotonically in lam; we bisect for
    Q(lam) = c_n.
    """
    if c_min is None:
        c_min = minimize_criterion(Q)[1]
    mat = M.matrix
    chol = linalg.cholesky(mat, lower=True)
    gt = linalg.solve_triangular(chol, Q.G, lower=True)
    gtilde = linalg.solve_triangular(chol, gt.T, lower=True)
    gtilde = 0.5 * (gtilde + gtilde.T)
    btilde = linalg.solve_triangular(chol, Q.g, lower=True)
    s, vec = np.linalg.eigh(gtilde)
    b = vec.T @ btilde
    live = s > PINV_RCOND * max(s.max(initial=0.0), 0.0)
    s = np.where(live, s, 0.0)
    b = np.where(live, b, 0.0)  # ties on the shared null space go to zero

    def coords(lam: float) -> np.ndarray:
        return lam * b / (1.0 + lam * s)

    def q_of(gamma: np.ndarray) -> float:
        return float(Q.c + np.sum(s * gamma**2 - 2.0 * b * gamma))

    def back(gamma: np.ndarray) -> np.ndarray:
        return linalg.solve_triangular(chol.T, vec @ gamma, lower=False)

    flags: list[str] = []
    tol = 1e-10 * max(1.0, c_n)
    if Q.c <= c_n:
        beta = np.zeros(Q.p)
        lam = 0.0
    else:
        gamma_inf = np.where(live, b / np.where(live, s, 1.0), 0.0)
        q_inf = q_of(gamma_inf)
        if c_n <= q_inf + tol:
            # Threshold sits at the criterion minimum: the solution set is argmin Q.
            flags.append("degenerate_threshold")
            beta, lam = back(gamma_inf), math.inf
        else:
            lo, hi = 0.0, 1.0
            for _ in range(MAX_DOUBLINGS):
                if q_of(coords(hi)) <= c_n:
                    break
                lo, hi = hi, 2.0 * hi
            else:
                raise SelectionError("multiplier bisection failed to bracket; inputs are badly scaled")
            for _ in range(400):
                mid = 0.5 * (lo + hi) if lo == 0.0 else math.sqrt(lo * hi)
                if not lo < mid < hi:
                    break
                qm = q_of(coords(mid))
                if qm > c_n:
                    lo = mid
                else:
                    hi = mid
            lam = hi
            beta = back(coords(hi))
    q_val = Q.value(beta)
    feasible = q_val <= c_n + 1e-10
    if not feasible:
        flags.append("infeasible")
    return BridgeEstimate(
        beta=beta,
        c_min=float(c_min),
        c_n=float(c_n),
        m_value=float(beta @ mat @ beta),
        lagrange_multiplier=float(lam),
        feasible=bool(feasible),
        flags=tuple(flags),
    )
