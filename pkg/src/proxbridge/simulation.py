"""Data-generating processes with known truth and the Monte Carlo driver."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import expit

from . import oracle
from .basis import evaluate
from .data import Dataset
from .errors import ProxBridgeError, SimulationError
from .inference import EstimatorConfig, estimate
from .oracle import DiscreteJoint


def sample_discrete(joint: DiscreteJoint, n: int, seed) -> Dataset:
    """n i.i.d. draws; the latent U is dropped.  X is emitted as level codes
    in column x1 only when it has more than one level."""
    rng = np.random.default_rng(seed)
    if n == 0:
        return Dataset.empty(1 if joint.card_x > 1 else 0)
    flat = joint.prob.ravel()
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    _, x, a, z, w, y = np.unravel_index(idx, joint.prob.shape)
    xcol = x.astype(float).reshape(-1, 1) if joint.card_x > 1 else np.zeros((n, 0))
    return Dataset(joint.y_values[y], a, z.astype(float), w.astype(float), xcol)


@dataclass(frozen=True)
class LinearGaussianSpec:
    """Linear structural model with truncated-Gaussian latent, covariates and noise.

    U ~ N(0, u_scale^2), X_j ~ N(0, x_scale^2), Z = z_u U + z_x'X + e_z,
    W = w_u U + w_x'X + e_w, P(A=1 | U, X) = expit(a_0 + a_u U + a_x'X),
    Y = y_0 + y_a A + y_u U + y_x'X + e_y.  Every Gaussian draw is truncated
    to +/- ``truncation`` standard deviations, which keeps all conditional
    means linear, so h(w, a, x) = y_0 + y_a a + y_x'x + (y_u / w_u)(w - w_x'x)
    is an outcome bridge.
    """

    d: int = 1
    u_scale: float = 1.0
    x_scale: float = 1.0
    z_u: float = 1.0
    z_x: float = 0.5
    w_u: float = 1.0
    w_x: float = 0.5
    a_0: float = 0.0
    a_u: float = 0.3
    a_x: float = 0.2
    y_0: float = 1.0
    y_a: float = 1.0
    y_u: float = 1.0
    y_x: float = 0.5
    z_noise: float = 0.5
    w_noise: float = 0.5
    y_noise: float = 0.5
    truncation: float = 3.0

    def __post_init__(self):
        if self.truncation <= 0:
            raise SimulationError("truncation must be positive")
        if self.y_u != 0 and self.w_u == 0:
            raise SimulationError("w_u must be non-zero when U affects Y (no linear bridge otherwise)")
        lat = 6.0 * self.u_scale * abs(self.a_u)
        cov = self.truncation * self.x_scale * abs(self.a_x) * self.d
        for extreme in (self.a_0 - lat - cov, self.a_0 + lat + cov):
            p = float(expit(extreme))
            if not 0.05 < p < 0.95:
                raise SimulationError(f"propensity reaches {p:.3f} over the 6-sigma latent range; need (0.05, 0.95)")

    def mu(self, a: int) -> float:
        return self.y_0 + self.y_a * a

    def bridge(self, w, a, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(len(np.atleast_1d(w)), -1)
        xs = x.sum(axis=1) if x.shape[1] else 0.0
        slope = self.y_u / self.w_u if self.w_u else 0.0
        return self.y_0 + self.y_a * np.asarray(a) + self.y_x * xs + slope * (np.asarray(w) - self.w_x * xs)


def _truncated_normal(rng, scale: float, size, bound: float, counter: list) -> np.ndarray:
    out = rng.standard_normal(size)
    bad = np.abs(out) > bound
    counter[0] += out.size
    while bad.any():
        counter[1] += int(bad.sum())
        counter[0] += int(bad.sum())
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return scale * out


def sample_linear_gaussian(spec: LinearGaussianSpec, n: int, seed, *, return_fraction: bool = False):
    """Dataset with U dropped; optionally also the fraction of Gaussian draws
    that fell outside the truncation band and were redrawn."""
    rng = np.random.default_rng(seed)
    counter = [0, 0]
    t = spec.truncation
    u = _truncated_normal(rng, spec.u_scale, n, t, counter)
    x = _truncated_normal(rng, spec.x_scale, (n, spec.d), t, counter)
    xs = x.sum(axis=1)
    z = spec.z_u * u + spec.z_x * xs + _truncated_normal(rng, spec.z_noise, n, t, counter)
    w = spec.w_u * u + spec.w_x * xs + _truncated_normal(rng, spec.w_noise, n, t, counter)
    a = (rng.random(n) < expit(spec.a_0 + spec.a_u * u + spec.a_x * xs)).astype(int)
    y = spec.y_0 + spec.y_a * a + spec.y_u * u + spec.y_x * xs + _truncated_normal(rng, spec.y_noise, n, t, counter)
    fraction = counter[1] / counter[0] if counter[0] else 0.0
    if fraction > 0.05:
        raise SimulationError(f"truncation discarded {fraction:.1%} of draws (> 5%); loosen the truncation")
    ds = Dataset(y, a, z, w, x)
    return (ds, fraction) if return_fraction else ds


@dataclass(frozen=True, eq=False)
class DgpSpec:
    kind: str
    joint: DiscreteJoint | None = None
    linear: LinearGaussianSpec | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "discrete":
            if self.joint is None:
                raise SimulationError("discrete DGP needs a joint")
            self.joint.check_positivity()
        elif self.kind == "linear_gaussian":
            if self.linear is None:
                raise SimulationError("linear_gaussian DGP needs coefficients")
        else:
            raise SimulationError(f"unknown DGP kind {self.kind!r}")

    def sample(self, n: int, seed) -> Dataset:
        if self.kind == "discrete":
            return sample_discrete(self.joint, n, seed)
        return sample_linear_gaussian(self.linear, n, seed)

    def truth(self, a: int) -> float:
        if self.kind == "discrete":
            return oracle.true_counterfactual_mean(self.joint, a)
        return self.linear.mu(a)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "name": self.name}
        if self.kind == "discrete":
            out["joint"] = {"dims": self.joint.dims, "prob": [float(v) for v in self.joint.prob.ravel()],
                            "y_values": [float(v) for v in self.joint.y_values]}
        else:
            out["linear"] = asdict(self.linear)
        return out


PRESETS = ("nonunique", "linear_gaussian", "no_confounding")


def preset(name: str, **overrides) -> DgpSpec:
    """Named test beds.

    ``nonunique``: binary U/Z/Y, three-level W, outcome bridge null space of
    dimension one per arm.  ``linear_gaussian``: confounded linear model.
    ``no_confounding``: same but U affects neither A nor Y.
    """
    if name == "nonunique":
        if overrides:
            raise SimulationError("the nonunique preset takes no overrides")
        return DgpSpec("discrete", joint=oracle.nonunique_preset(), name=name)
    if name == "linear_gaussian":
        return DgpSpec("linear_gaussian", linear=LinearGaussianSpec(**overrides), name=name)
    if name == "no_confounding":
        params = {"a_u": 0.0, "y_u": 0.0, **overrides}
        return DgpSpec("linear_gaussian", linear=LinearGaussianSpec(**params), name=name)
    raise SimulationError(f"unknown preset {name!r}; choose from {PRESETS}")


def linear_spec_fields() -> list[str]:
    return [f.name for f in fields(LinearGaussianSpec)]


def naive_outcome_regression(dataset: Dataset) -> dict[int, float]:
    """Arm means from OLS of Y on (1, A, X), ignoring the proxies."""
    design = np.column_stack([np.ones(dataset.n), dataset.a, dataset.x])
    coef = np.linalg.lstsq(design, dataset.y, rcond=None)[0]
    out = {}
    for arm in (0, 1):
        d_arm = np.column_stack([np.ones(dataset.n), np.full(dataset.n, arm), dataset.x])
        out[arm] = float(np.mean(d_arm @ coef))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True, eq=False)
class McConfig:
    dgp: DgpSpec
    n_ladder: tuple[int, ...]
    replications: int
    seed: int = 0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    jobs: int = 1

    def __post_init__(self):
        if self.replications < 2:
            raise SimulationError("replications must be >= 2")
        ladder = tuple(int(v) for v in self.n_ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise SimulationError("n_ladder must be a non-empty increasing sequence")
        object.__setattr__(self, "n_ladder", ladder)


ROW_FIELDS = (
    "n", "r", "arm", "mu_true", "mu_plugin", "mu_db", "r_hat_n", "sigma2", "ci_low", "ci_high",
    "covered", "set_dist", "minnorm_dist", "c_n", "mu_naive", "flags",
)


def replicate_seed(seed: int, n: int, r: int) -> np.random.SeedSequence:
    """Independent stream keyed by (seed, n, r)."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(n), int(r)))


@dataclass(frozen=True, eq=False)
class _OracleGrid:
    grid: Dataset
    sets: dict
    targets: dict


def _oracle_grid(joint: DiscreteJoint) -> _OracleGrid:
    cw, cx = joint.card_w, joint.card_x
    w, x = np.meshgrid(np.arange(cw), np.arange(cx), indexing="ij")  # level-major
    xcol = x.reshape(-1, 1).astype(float) if cx > 1 else np.zeros((cw * cx, 0))
    grid = Dataset(np.zeros(cw * cx), np.zeros(cw * cx, dtype=int), np.zeros(cw * cx), w.reshape(-1).astype(float), xcol)
    sets = {a: oracle.bridge_solution_set(joint, a, "outcome") for a in (0, 1)}
    targets = {a: sets[a].min_weighted_norm_element() for a in (0, 1)}
    return _OracleGrid(grid, sets, targets)


def _run_one(config: McConfig, n: int, r: int, ogrid: _OracleGrid | None) -> list[dict]:
    ds = config.dgp.sample(n, replicate_seed(config.seed, n, r))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = estimate(ds, config.estimator)
    naive = naive_outcome_regression(ds)
    truth = {a: config.dgp.truth(a) for a in (0, 1)}
    rows = []
    for arm in (0, 1, "ate"):
        rep = report.ate if arm == "ate" else report.arms[arm]
        mu_true = truth[1] - truth[0] if arm == "ate" else truth[arm]
        set_dist = minnorm = math.nan
        if ogrid is not None and arm != "ate":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                design = evaluate(report.fitted.psi_basis, ogrid.grid, override_arm=arm).values
            h_vals = design @ rep.bridge.beta
            set_dist = oracle.directed_distance(h_vals, ogrid.sets[arm], "weighted")
            minnorm = float(np.max(np.abs(h_vals - ogrid.targets[arm])))
        mu_naive = naive[1] - naive[0] if arm == "ate" else naive[arm]
        rows.append({
            "n": n, "r": r, "arm": arm, "mu_true": mu_true,
            "mu_plugin": rep.mu_plugin, "mu_db": rep.mu_debiased, "r_hat_n": rep.r_hat_n,
            "sigma2": rep.sigma2, "ci_low": rep.ci_low, "ci_high": rep.ci_high,
            "covered": int(rep.ci_low <= mu_true <= rep.ci_high),
            "set_dist": set_dist, "minnorm_dist": minnorm,
            "c_n": rep.diagnostics.get("c_n", math.nan), "mu_naive": mu_naive,
            "flags": ";".join(rep.diagnostics.get("flags", [])),
        })
    return rows


def _task(args):
    config, n, r, ogrid = args
    try:
        return n, r, _run_one(config, n, r, ogrid), None
    except (ProxBridgeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return n, r, [], f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True, eq=False)
class McResult:
    rows: list
    summary: list
    failures: list
    config: McConfig

    def summary_for(self, n: int, arm) -> dict:
        for row in self.summary:
            if row["n"] == n and row["arm"] == arm:
                return row
        raise KeyError((n, arm))


def _aggregate(rows: list[dict], n: int, arm, failures: int) -> dict:
    sel = [r for r in rows if r["n"] == n and r["arm"] == arm]
    if not sel:
        return {"n": n, "arm": arm, "replications": 0, "failures": failures}
    mu_true = sel[0]["mu_true"]
    db = np.array([r["mu_db"] for r in sel])
    pl = np.array([r["mu_plugin"] for r in sel])
    naive = np.array([r["mu_naive"] for r in sel])
    err_db, err_pl = db - mu_true, pl - mu_true
    bias_db, bias_pl = float(err_db.mean()), float(err_pl.mean())
    sd_db, sd_pl = float(db.std()), float(pl.std())
    count = len(sel)
    root_n = math.sqrt(n)
    set_d = np.array([r["set_dist"] for r in sel])
    mn_d = np.array([r["minnorm_dist"] for r in sel])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = {
            "n": n,
            "arm": arm,
            "replications": count,
            "failures": failures,
            "mu_true": mu_true,
            "bias_plugin": bias_pl,
            "bias_db": bias_db,
            "sd_plugin": sd_pl,
            "sd_db": sd_db,
            "rmse_plugin": float(np.sqrt(np.mean(err_pl**2))),
            "rmse_db": float(np.sqrt(np.mean(err_db**2))),
            "root_n_bias_plugin": root_n * bias_pl,
            "root_n_bias_db": root_n * bias_db,
            "mc_se_root_n_bias_db": root_n * sd_db / math.sqrt(count),
            "coverage": float(np.mean([r["covered"] for r in sel])),
            "mean_sigma2": float(np.mean([r["sigma2"] for r in sel])),
            "mean_c_n": float(np.nanmean([r["c_n"] for r in sel])) if arm != "ate" else math.nan,
            "mean_set_dist": float(np.nanmean(set_d)) if np.isfinite(set_d).any() else math.nan,
            "median_set_dist": float(np.nanmedian(set_d)) if np.isfinite(set_d).any() else math.nan,
            "median_minnorm_dist": float(np.nanmedian(mn_d)) if np.isfinite(mn_d).any() else math.nan,
            "mean_naive": float(naive.mean()),
            "sd_naive": float(naive.std()),
        }
    return out


def run_monte_carlo(config: McConfig) -> McResult:
    """Sample, estimate both arms and the contrast, and aggregate per n."""
    ogrid = _oracle_grid(config.dgp.joint) if config.dgp.kind == "discrete" else None
    tasks = [(config, n, r, ogrid) for n in config.n_ladder for r in range(config.replications)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * config.jobs))))
    else:
        results = [_task(t) for t in tasks]
    rows, failures = [], []
    for n, r, res_rows, err in sorted(results, key=lambda t: (t[0], t[1])):
        if err is None:
            rows.extend(res_rows)
        else:
            failures.append({"n": n, "r": r, "error": err})
    summary = []
    for n in config.n_ladder:
        nfail = sum(1 for f in failures if f["n"] == n)
        for arm in (0, 1, "ate"):
            summary.append(_aggregate(rows, n, arm, nfail))
    return McResult(rows, summary, failures, config)
