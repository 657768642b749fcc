"""Exact ground truth for finite-valued laws.

When (U, X, A, Z, W, Y) are all discrete the bridge integral equations are
finite linear systems, one block per covariate level.  Everything here is
computed by enumeration and dense linear algebra and is used as the oracle
for the sieve estimators.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DimensionError, NoBridgeError, PositivityError, ProxBridgeError

ORDER = ("u", "x", "a", "z", "w", "y")
SV_CUTOFF = 1e-10
CONSISTENCY_TOL = 1e-9
ORTHO_TOL = 1e-9
RANGE_TOL = 1e-9


class DegenerateMetricWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Probability tensor over (u, x, a, z, w, y).

    ``y_values`` gives the numeric outcome attached to each y level; it
    defaults to ``0, 1, ..., card_y - 1``.
    """

    prob: np.ndarray
    y_values: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.prob, dtype=float)
        if p.ndim != 6:
            raise DimensionError(f"prob must have 6 axes {ORDER}, got {p.ndim}")
        if p.shape[2] != 2:
            raise DimensionError("treatment must be binary (card_a = 2)")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ProxBridgeError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ProxBridgeError(f"probabilities sum to {p.sum()!r}, not 1")
        yv = np.arange(p.shape[5], dtype=float) if self.y_values is None else np.asarray(self.y_values, float)
        if yv.shape != (p.shape[5],):
            raise DimensionError("y_values length must equal card_y")
        object.__setattr__(self, "prob", p)
        object.__setattr__(self, "y_values", yv)

    @property
    def dims(self) -> dict[str, int]:
        return dict(zip(ORDER, self.prob.shape))

    @property
    def card_x(self) -> int:
        return self.prob.shape[1]

    @property
    def card_z(self) -> int:
        return self.prob.shape[3]

    @property
    def card_w(self) -> int:
        return self.prob.shape[4]

    def marginal(self, keep: str) -> np.ndarray:
        """Marginal over the variables named in ``keep`` (in canonical order)."""
        axes = tuple(i for i, v in enumerate(ORDER) if v not in keep)
        return self.prob.sum(axis=axes)

    def check_positivity(self) -> None:
        p_ux = self.marginal("ux")
        p_uxa = self.marginal("uxa")
        for u, x in zip(*np.nonzero(p_ux > 0)):
            prop = p_uxa[u, x, 1] / p_ux[u, x]
            if not 0.0 < prop < 1.0:
                raise PositivityError(
                    f"P(A=1 | U={u}, X={x}) = {prop!r} is not strictly inside (0, 1)"
                )

    def to_json(self) -> str:
        doc = {
            "dims": self.dims,
            "order": list(ORDER),
            "prob": [float(v) for v in self.prob.ravel()],
            "y_values": [float(v) for v in self.y_values],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteJoint":
        doc = json.loads(text)
        try:
            dims = doc["dims"]
            order = doc.get("order", list(ORDER))
            flat = np.asarray(doc["prob"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ProxBridgeError(f"malformed joint document: {exc}") from None
        if sorted(order) != sorted(ORDER):
            raise ProxBridgeError(f"order must be a permutation of {list(ORDER)}")
        shape = tuple(int(dims[v]) for v in order)
        if flat.size != int(np.prod(shape)):
            raise DimensionError(f"prob has {flat.size} entries, dims imply {int(np.prod(shape))}")
        tensor = flat.reshape(shape).transpose([order.index(v) for v in ORDER])
        return cls(tensor, doc.get("y_values"))


def latent_joint(p_ux, p_z, p_a, p_w, p_y, y_values=None) -> DiscreteJoint:
    """Assemble a joint satisfying latent unconfoundedness by construction.

    Parameters
    ----------
    p_ux : (card_u, card_x) joint of the latent and the covariate.
    p_z : (card_u, card_x, card_z) conditional P(z | u, x).
    p_a : (card_u, card_x, card_z) propensity P(A=1 | u, x, z).
    p_w : (card_u, card_x, card_w) conditional P(w | u, x).
    p_y : (card_u, card_x, 2, card_y) conditional P(y | u, x, a).
    """
    p_ux, p_z, p_a, p_w, p_y = (np.asarray(v, dtype=float) for v in (p_ux, p_z, p_a, p_w, p_y))
    p_a2 = np.stack([1.0 - p_a, p_a], axis=2)  # (u, x, a, z)
    prob = np.einsum("ux,uxz,uxaz,uxw,uxay->uxazwy", p_ux, p_z, p_a2, p_w, p_y)
    prob = prob / prob.sum()
    return DiscreteJoint(prob, y_values)


def random_joint(rng, card_u=2, card_x=1, card_z=2, card_w=3, card_y=2, *, prop_range=(0.1, 0.9)):
    """Random latent-structure joint with positivity; both bridges exist when
    ``card_u <= min(card_z, card_w)`` (generically)."""
    p_ux = rng.dirichlet(np.ones(card_u * card_x)).reshape(card_u, card_x)
    p_ux = 0.5 * p_ux + 0.5 / (card_u * card_x)
    p_z = rng.dirichlet(np.ones(card_z), size=(card_u, card_x))
    p_w = rng.dirichlet(np.ones(card_w), size=(card_u, card_x))
    p_a = rng.uniform(*prop_range, size=(card_u, card_x, card_z))
    p_y = rng.dirichlet(np.ones(card_y), size=(card_u, card_x, 2))
    return latent_joint(p_ux, p_z, p_a, p_w, p_y)


def nonunique_preset() -> DiscreteJoint:
    """Binary U, Z, A, Y and three-level W, no covariates.

    The outcome bridge has a one-dimensional null space in each arm and the
    treatment bridge exists and is unique.  mu_1 = 0.7, mu_0 = 0.4.
    """
    p_ux = np.array([[0.5], [0.5]])
    p_z = np.array([[[0.8, 0.2]], [[0.2, 0.8]]])
    p_a = np.array([[[0.3, 0.3]], [[0.7, 0.7]]])
    p_w = np.array([[[0.6, 0.3, 0.1]], [[0.1, 0.3, 0.6]]])
    p_y1 = np.array([[0.2, 0.5], [0.6, 0.9]])  # P(Y=1 | u, a)
    p_y = np.stack([1.0 - p_y1, p_y1], axis=-1)[:, None, :, :]
    return latent_joint(p_ux, p_z, p_a, p_w, p_y)


# ---------------------------------------------------------------------------
# Exact functionals


def true_counterfactual_mean(joint: DiscreteJoint, a: int) -> float:
    """g-formula over the latent U: sum_{u,x} E[Y | a, u, x] P(u, x)."""
    joint.check_positivity()
    p_ux = joint.marginal("ux")
    p_uxay = joint.marginal("uxay")[:, :, a, :]
    p_uxa = p_uxay.sum(axis=-1)
    total = 0.0
    for u, x in zip(*np.nonzero(p_ux > 0)):
        ey = float(p_uxay[u, x] @ joint.y_values) / p_uxa[u, x]
        total += ey * p_ux[u, x]
    return total


@dataclass(frozen=True, eq=False)
class AffineSolutionSet:
    """{particular + null_basis @ t}: every bridge solving the arm-``a`` system.

    Vectors are indexed by the flattened (level, x) grid, level-major, where
    level is w for outcome bridges and z for treatment bridges.
    """

    particular: np.ndarray
    null_basis: np.ndarray
    kind: str
    arm: int
    shape: tuple[int, int]
    operator: np.ndarray
    rhs: np.ndarray
    row_weight: np.ndarray
    inner_weight: np.ndarray
    metric: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return int(self.null_basis.shape[1])

    def member(self, t) -> np.ndarray:
        return self.particular + self.null_basis @ np.asarray(t, dtype=float)

    def residual(self, vec) -> float:
        return float(np.max(np.abs(self.operator @ vec - self.rhs), initial=0.0))

    def min_weighted_norm_element(self, weight=None) -> np.ndarray:
        """Member minimising sum(weight * v**2); ``weight`` defaults to the
        L2 weighting ``inner_weight`` (the squared-length criterion)."""
        wt = self.inner_weight if weight is None else np.asarray(weight, float)
        if self.dim == 0:
            return self.particular.copy()
        nb = self.null_basis
        lhs = nb.T @ (wt[:, None] * nb)
        rhs = -nb.T @ (wt * self.particular)
        t = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        return self.member(t)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "arm": self.arm,
            "grid_shape": list(self.shape),
            "dim": self.dim,
            "particular": [float(v) for v in self.particular],
            "null_basis": [[float(v) for v in col] for col in self.null_basis.T],
        }


def _svd_solve(mat: np.ndarray, rhs: np.ndarray):
    ncol = mat.shape[1]
    if mat.shape[0] == 0:
        return np.zeros(ncol), np.eye(ncol)
    u, s, vt = np.linalg.svd(mat, full_matrices=True)
    cutoff = SV_CUTOFF * (s.max() if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    coef = (u[:, :rank].T @ rhs) / s[:rank]
    particular = vt[:rank].T @ coef
    null = vt[rank:].T
    return particular, null


def _system(joint: DiscreteJoint, a: int, kind: str):
    """Stack the per-x blocks of the arm-``a`` linear system.

    Returns operator, rhs, row weights, column (inner-product) weights, grid shape.
    """
    if kind not in ("outcome", "treatment"):
        raise ValueError(f"kind must be 'outcome' or 'treatment', got {kind!r}")
    if a not in (0, 1):
        raise ValueError(f"arm must be 0 or 1, got {a!r}")
    p_xazwy = joint.marginal("xazwy")
    p_xazw = p_xazwy.sum(axis=-1)[:, a]  # (x, z, w)
    card_x, card_z, card_w = p_xazw.shape
    p_xw = joint.marginal("xw")
    if kind == "outcome":
        ncol_level, nrow_level = card_w, card_z
        col_weight = p_xazw.sum(axis=1)  # P(w, a, x) as (x, w)
        row_weight = p_xazw.sum(axis=2)  # P(z, a, x) as (x, z)
        ey = p_xazwy[:, a].sum(axis=2) @ joint.y_values  # (x, z) numerator
    else:
        ncol_level, nrow_level = card_z, card_w
        col_weight = p_xazw.sum(axis=2)  # P(z, a, x)
        row_weight = p_xazw.sum(axis=1)  # P(w, a, x)
    shape = (ncol_level, card_x)
    rows, rhs, rweights = [], [], []
    for r in range(nrow_level):
        for x in range(card_x):
            pr = row_weight[x, r]
            if pr <= 0:
                continue
            line = np.zeros(ncol_level * card_x)
            if kind == "outcome":
                cond = p_xazw[x, r, :] / pr  # P(w | z, a, x)
                target = ey[x, r] / pr
            else:
                cond = p_xazw[x, :, r] / pr  # P(z | w, a, x)
                target = p_xw[x, r] / pr  # 1 / P(A=a | w, x)
            line[np.arange(ncol_level) * card_x + x] = cond
            rows.append(line)
            rhs.append(target)
            rweights.append(pr)
    operator = np.array(rows).reshape(len(rows), ncol_level * card_x)
    inner_weight = col_weight.T.reshape(-1)  # level-major
    return operator, np.array(rhs), np.array(rweights), inner_weight, shape


def bridge_solution_set(joint: DiscreteJoint, a: int, kind: str = "outcome") -> AffineSolutionSet:
    """All solutions of the arm-``a`` outcome or treatment bridge equation."""
    operator, rhs, rweight, inner_weight, shape = _system(joint, a, kind)
    particular, null = _svd_solve(operator, rhs)
    resid = float(np.max(np.abs(operator @ particular - rhs), initial=0.0))
    if resid > CONSISTENCY_TOL:
        raise NoBridgeError(
            f"no {kind} bridge exists for arm {a}: least-squares residual {resid:.3e}"
        )
    metric = operator.T @ (rweight[:, None] * operator)
    return AffineSolutionSet(
        particular=particular,
        null_basis=null,
        kind=kind,
        arm=a,
        shape=shape,
        operator=operator,
        rhs=rhs,
        row_weight=rweight,
        inner_weight=inner_weight,
        metric=metric,
    )


def _adjoint(joint: DiscreteJoint, a: int, kind: str):
    """Adjoint of the arm-``a`` conditional-expectation operator, rows restricted
    to positive-probability cells of the domain grid."""
    other = "treatment" if kind == "outcome" else "outcome"
    operator, _, rweight, inner_weight, _ = _system(joint, a, other)
    del rweight
    # The other kind's operator maps functions of the opposite proxy, i.e.
    # it is exactly the adjoint under the probability-weighted inner products.
    return operator, inner_weight


def _flat_phi(phi, solution_set: AffineSolutionSet) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    size = solution_set.shape[0] * solution_set.shape[1]
    if phi.size != size:
        raise DimensionError(
            f"phi has {phi.size} entries, the {solution_set.kind} grid has {size} (levels x covariate levels)"
        )
    return phi.reshape(-1)


def inverse_propensity_phi(joint: DiscreteJoint, a: int) -> np.ndarray:
    """phi(w, x) = 1 / P(A=a | w, x) on the (w, x) grid (level-major)."""
    p_xaw = joint.marginal("xaw")
    p_xw = p_xaw.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(p_xaw[:, a] > 0, p_xw / p_xaw[:, a], 0.0)
    return phi.T.reshape(-1)


def outcome_regression_phi(joint: DiscreteJoint, a: int) -> np.ndarray:
    """phi(z, x) = E[Y | z, A=a, x] on the (z, x) grid (level-major)."""
    p_xazy = joint.marginal("xazy")[:, a]
    p_xaz = p_xazy.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(p_xaz > 0, (p_xazy @ joint.y_values) / p_xaz, 0.0)
    return phi.T.reshape(-1)


def functional_identified(joint, a, phi, kind="outcome", *, solution_set=None) -> bool:
    """True iff phi is orthogonal (probability-weighted) to the null space."""
    sset = solution_set if solution_set is not None else bridge_solution_set(joint, a, kind)
    return _orthogonality(sset, _flat_phi(phi, sset)) <= ORTHO_TOL * max(1.0, np.max(np.abs(phi)))


def _orthogonality(sset: AffineSolutionSet, phi: np.ndarray) -> float:
    if sset.dim == 0:
        return 0.0
    return float(np.max(np.abs(sset.null_basis.T @ (sset.inner_weight * phi))))


@dataclass(frozen=True)
class IdentificationReport:
    functional_identified: bool
    root_n_range_member: bool
    null_dim: int
    residual_norms: dict
    preimage: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "functional_identified": self.functional_identified,
            "root_n_range_member": self.root_n_range_member,
            "null_dim": self.null_dim,
            "residual_norms": dict(self.residual_norms),
            "preimage": None if self.preimage is None else [float(v) for v in self.preimage],
        }


def root_n_range_member(joint, a, phi, kind="outcome", *, solution_set=None) -> IdentificationReport:
    """Range membership of phi for the adjoint operator (finite-dimensional,
    so the range is closed).  ``preimage`` solves adjoint @ preimage = phi."""
    sset = solution_set if solution_set is not None else bridge_solution_set(joint, a, kind)
    phi = _flat_phi(phi, sset)
    adjoint, _ = _adjoint(joint, a, kind)
    # Rows of the adjoint are the positive-probability cells of the domain grid.
    live = sset.inner_weight > 0
    target = phi[live]
    if adjoint.shape[0] != target.shape[0]:
        raise DimensionError("adjoint rows do not match positive-probability cells")
    pre = np.linalg.lstsq(adjoint, target, rcond=None)[0] if adjoint.size else np.zeros(0)
    range_resid = float(np.max(np.abs(adjoint @ pre - target), initial=0.0))
    ortho = _orthogonality(sset, phi)
    scale = max(1.0, float(np.max(np.abs(phi), initial=0.0)))
    member = range_resid < RANGE_TOL * scale
    identified = ortho <= ORTHO_TOL * scale
    return IdentificationReport(
        functional_identified=bool(identified),
        root_n_range_member=bool(member),
        null_dim=sset.dim,
        residual_norms={"orthogonality": ortho, "range_residual": range_resid},
        preimage=pre,
    )


# ---------------------------------------------------------------------------
# Point-to-set distances


def directed_distance(point, solution_set: AffineSolutionSet, metric: str = "weighted") -> float:
    """inf over the solution set of ||point - h||.

    ``weighted`` uses the conditional-expectation norm of the set (which is
    blind to null directions); ``sup`` uses the max-abs norm, minimised over
    the null coordinates by linear programming.
    """
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape != solution_set.particular.shape:
        raise DimensionError(
            f"point has {point.size} coordinates, the set lives in {solution_set.particular.size}"
        )
    diff = point - solution_set.particular
    nb = solution_set.null_basis
    if metric == "weighted":
        wmat = solution_set.metric
        if not np.all(np.isfinite(wmat)) or np.trace(wmat) <= 1e-14:
            warnings.warn("degenerate weighting matrix; using the Euclidean norm", DegenerateMetricWarning)
            wmat = np.eye(diff.size)
        if nb.shape[1]:
            lhs = nb.T @ wmat @ nb
            t = np.linalg.lstsq(lhs, nb.T @ wmat @ diff, rcond=None)[0]
            diff = diff - nb @ t
        return float(np.sqrt(max(diff @ wmat @ diff, 0.0)))
    if metric == "sup":
        if nb.shape[1] == 0:
            return float(np.max(np.abs(diff), initial=0.0))
        return _sup_distance_lp(diff, nb)
    raise ValueError(f"metric must be 'weighted' or 'sup', got {metric!r}")


def _sup_distance_lp(diff: np.ndarray, nb: np.ndarray) -> float:
    """min over c of max|diff - nb c| as the LP  min t  s.t.  -t <= diff - nb c <= t."""
    p, k = nb.shape
    cost = np.r_[np.zeros(k), 1.0]
    ones = np.ones((p, 1))
    a_ub = np.block([[-nb, -ones], [nb, -ones]])
    b_ub = np.r_[-diff, diff]
    res = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * k + [(0, None)], method="highs")
    if res.status != 0:
        raise ProxBridgeError(f"sup-norm distance LP failed: {res.message}")
    return float(res.fun)
