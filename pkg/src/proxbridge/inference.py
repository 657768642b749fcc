"""Plug-in and debiased counterfactual means, influence functions and Wald intervals.

``estimate`` runs the full pipeline on a dataset: fit the sieves, build the
solution-set criterion per arm, select the min-length bridge, estimate the
representer, debias, and contrast the arms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import basis as sieve_basis
from .basis import BasisSpec
from .bridge import (
    BridgeEstimate,
    SieveData,
    assemble_outcome_criterion,
    choose_threshold,
    minimize_criterion,
    prepare,
    select_min_norm,
    selection_weights,
)
from .data import Dataset
from .errors import DimensionError, ProxBridgeError
from .representer import (
    RepresenterEstimate,
    assemble_representer_criterion,
    debias_correction,
    estimate_representer,
    projected_representer,
)


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for one run of the estimator.

    ``psi`` and ``phi`` describe the bridge and instrument sieves.  When
    their ``count`` is unset and a continuous variable is present, the bridge
    sieve gets ``default_count(n)`` functions per arm and the instrument
    sieve twice that.  ``criterion`` is ``"arm"`` (one criterion per arm) or
    ``"pooled"``.
    """

    psi: BasisSpec = field(default_factory=BasisSpec)
    phi: BasisSpec = field(default_factory=BasisSpec)
    kappa: float = 1.0
    level: float = 0.95
    criterion: str = "arm"

    def __post_init__(self):
        if self.kappa < 0:
            raise ProxBridgeError(f"kappa must be >= 0, got {self.kappa!r}")
        if not 0.0 < self.level < 1.0:
            raise ProxBridgeError(f"level must lie in (0, 1), got {self.level!r}")
        if self.criterion not in ("arm", "pooled"):
            raise ProxBridgeError(f"criterion must be 'arm' or 'pooled', got {self.criterion!r}")

    def to_dict(self) -> dict:
        def spec(s: BasisSpec) -> dict:
            return {
                "family": s.family,
                "degree": s.degree,
                "knots": s.knots,
                "per_arm": s.per_arm,
                "count": s.count,
                "discrete": s.discrete if isinstance(s.discrete, str) else list(s.discrete),
            }

        return {"psi": spec(self.psi), "phi": spec(self.phi), "kappa": self.kappa, "level": self.level,
                "criterion": self.criterion}


@dataclass(frozen=True, eq=False)
class EstimateReport:
    arm: int | str
    mu_plugin: float
    r_hat_n: float
    mu_debiased: float
    sigma2: float
    ci_low: float
    ci_high: float
    level: float
    n: int
    diagnostics: dict = field(default_factory=dict)
    influence: np.ndarray | None = field(default=None, repr=False)
    bridge: BridgeEstimate | None = field(default=None, repr=False)
    representer: RepresenterEstimate | None = field(default=None, repr=False)

    def to_dict(self, include_influence: bool = False) -> dict:
        out = {
            "arm": self.arm,
            "mu_plugin": self.mu_plugin,
            "r_hat_n": self.r_hat_n,
            "mu_debiased": self.mu_debiased,
            "sigma2": self.sigma2,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "n": self.n,
            "diagnostics": self.diagnostics,
        }
        if include_influence and self.influence is not None:
            out["influence"] = [float(v) for v in self.influence]
        return out


def plugin_mean(sieve: SieveData, h_beta, a: int) -> float:
    """mu_a = (1/n) sum h(W_i, a, X_i)."""
    return float(np.mean(sieve.psi_arm[a] @ np.asarray(h_beta, dtype=float)))


def influence_values(sieve: SieveData, h_beta, g_beta, a: int, mu: float) -> np.ndarray:
    """h(W, a, X) - mu + 1[A=a] E{g | Z, A, X} (Y - h(W, A, X)), per observation."""
    h_beta = np.asarray(h_beta, dtype=float)
    h_at_arm = sieve.psi_arm[a] @ h_beta
    h_obs = sieve.psi @ h_beta
    return h_at_arm - mu + projected_representer(sieve, g_beta, a) * (sieve.y - h_obs)


def confidence_interval(mu: float, sigma2: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wald interval mu +/- z_{1-alpha/2} sqrt(sigma2 / n)."""
    if not 0.0 < level < 1.0:
        raise ProxBridgeError(f"level must lie in (0, 1), got {level!r}")
    if sigma2 < 0:
        raise ProxBridgeError("sigma2 must be non-negative")
    half = float(stats.norm.ppf(0.5 + level / 2.0)) * math.sqrt(sigma2 / n)
    return mu - half, mu + half


def _interval_flags(sigma2: float, n: int) -> list[str]:
    flags = []
    if sigma2 == 0.0:
        flags.append("degenerate_interval")
    if n < 30:
        flags.append("small_n")
    return flags


def ate(report_1: EstimateReport, report_0: EstimateReport, level: float | None = None) -> EstimateReport:
    """mu_1 - mu_0 with the variance of the differenced influence values."""
    if report_1.n != report_0.n:
        raise DimensionError("arm reports come from datasets of different sizes")
    level = report_1.level if level is None else level
    infl = None
    if report_1.influence is not None and report_0.influence is not None:
        if report_1.influence.shape != report_0.influence.shape:
            raise DimensionError("influence vectors have different lengths")
        infl = report_1.influence - report_0.influence
        sigma2 = float(np.mean((infl - infl.mean()) ** 2))
    elif report_1 is report_0:
        sigma2 = 0.0
    else:
        raise ProxBridgeError("both reports need influence values to contrast them")
    mu_plugin = report_1.mu_plugin - report_0.mu_plugin
    r_hat = report_1.r_hat_n - report_0.r_hat_n
    mu_db = mu_plugin + r_hat
    lo, hi = confidence_interval(mu_db, sigma2, report_1.n, level)
    return EstimateReport(
        arm="ate",
        mu_plugin=mu_plugin,
        r_hat_n=r_hat,
        mu_debiased=mu_db,
        sigma2=sigma2,
        ci_low=lo,
        ci_high=hi,
        level=level,
        n=report_1.n,
        diagnostics={"flags": _interval_flags(sigma2, report_1.n)},
        influence=infl,
    )


@dataclass(frozen=True, eq=False)
class FittedSieves:
    sieve: SieveData
    psi_basis: sieve_basis.BasisSet
    phi_basis: sieve_basis.BasisSet
    diagnostics: dict


def fit_sieves(dataset: Dataset, config: EstimatorConfig) -> FittedSieves:
    rescale = sieve_basis.fit_rescale(dataset)
    m = sieve_basis.default_count(dataset.n)
    psi_spec = sieve_basis.sized_spec(config.psi, ("w", "x"), rescale, m)
    phi_spec = sieve_basis.sized_spec(config.phi, ("z", "x"), rescale, 2 * m)
    psi_basis = sieve_basis.build_basis(psi_spec, ("w", "x"), rescale)
    phi_basis = sieve_basis.build_basis(phi_spec, ("z", "x"), rescale)
    sieve = prepare(dataset, psi_basis, phi_basis)
    gram_eig = float(np.linalg.eigvalsh(sieve.phi.T @ sieve.phi / sieve.n).min())
    diagnostics = {
        "m_n": psi_basis.size,
        "k_n": phi_basis.size,
        "psi_labels": psi_basis.labels,
        "phi_labels": phi_basis.labels,
        "phi_gram_min_eig": gram_eig,
        "projection_ridge": sieve.model.ridge_used,
        "notes": sieve_basis.check_sizes(psi_basis, phi_basis),
    }
    return FittedSieves(sieve, psi_basis, phi_basis, diagnostics)


def active_instruments(sieve: SieveData, criterion: str, a: int) -> int:
    """Instrument functions that are not identically zero on the rows the
    criterion averages over (one arm block under a per-arm sieve)."""
    rows = sieve.phi if criterion == "pooled" else sieve.phi[sieve.a == a]
    return int(np.count_nonzero(np.any(rows != 0, axis=0)))


def estimate_arm(fitted: FittedSieves, a: int, config: EstimatorConfig) -> EstimateReport:
    sieve = fitted.sieve
    n = sieve.n
    Q = assemble_outcome_criterion(sieve, a if config.criterion == "arm" else "both")
    _, c_min = minimize_criterion(Q)
    c_n = choose_threshold(c_min, n, active_instruments(sieve, config.criterion, a), config.kappa)
    M = selection_weights(sieve.psi)
    bridge = select_min_norm(Q, c_n, M, c_min=c_min)
    rep = estimate_representer(assemble_representer_criterion(sieve, a))
    mu_plugin = plugin_mean(sieve, bridge.beta, a)
    r_hat = debias_correction(sieve, rep.beta_g, bridge.beta, a)
    mu_db = mu_plugin + r_hat
    infl = influence_values(sieve, bridge.beta, rep.beta_g, a, mu_db)
    sigma2 = float(np.mean((infl - infl.mean()) ** 2))
    lo, hi = confidence_interval(mu_db, sigma2, n, config.level)
    flags = list(bridge.flags) + _interval_flags(sigma2, n)
    if config.kappa == 0:
        flags.append("kappa_zero")
    if rep.degenerate_flag:
        flags.append("degenerate_representer")
    if sieve.model.ridge_used:
        flags.append("projection_ridge")
    diagnostics = {
        "c_min": bridge.c_min,
        "c_n": bridge.c_n,
        "k_active": active_instruments(sieve, config.criterion, a),
        "m_value": bridge.m_value,
        "multiplier": bridge.lagrange_multiplier,
        "feasible": bridge.feasible,
        "representer_r_value": rep.r_value,
        "representer_range_residual": rep.range_residual,
        "flags": flags,
    }
    return EstimateReport(
        arm=a,
        mu_plugin=mu_plugin,
        r_hat_n=r_hat,
        mu_debiased=mu_db,
        sigma2=sigma2,
        ci_low=lo,
        ci_high=hi,
        level=config.level,
        n=n,
        diagnostics=diagnostics,
        influence=infl,
        bridge=bridge,
        representer=rep,
    )


@dataclass(frozen=True, eq=False)
class EffectReport:
    arms: dict
    ate: EstimateReport
    fitted: FittedSieves = field(repr=False)
    config: EstimatorConfig = field(default_factory=EstimatorConfig)

    def to_dict(self) -> dict:
        return {
            "arms": {str(a): r.to_dict() for a, r in self.arms.items()},
            "ate": self.ate.to_dict(),
            "sieve": self.fitted.diagnostics,
            "config": self.config.to_dict(),
        }


def estimate(dataset: Dataset, config: EstimatorConfig | None = None) -> EffectReport:
    """Debiased counterfactual means for both arms and their contrast."""
    config = EstimatorConfig() if config is None else config
    fitted = fit_sieves(dataset, config)
    arms = {a: estimate_arm(fitted, a, config) for a in (0, 1)}
    return EffectReport(arms, ate(arms[1], arms[0], config.level), fitted, config)
