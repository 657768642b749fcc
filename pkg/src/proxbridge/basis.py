"""Sieve families for the bridge space (W, A, X) and the instrument space (Z, A, X)."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import BSpline

from .data import Dataset
from .errors import BasisError

FAMILIES = ("polynomial", "monomial", "bspline", "indicator")
MAX_DISCRETE_LEVELS = 10


@dataclass(frozen=True)
class RescaleMap:
    """Per-variable affine maps onto [0, 1] plus the observed levels of
    low-cardinality variables (used by indicator bases)."""

    lo: dict[str, float]
    span: dict[str, float]
    levels: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def apply(self, name: str, values) -> tuple[np.ndarray, bool]:
        scaled = (np.asarray(values, dtype=float) - self.lo[name]) / self.span[name]
        outside = bool(np.any((scaled < -1e-12) | (scaled > 1 + 1e-12)))
        return np.clip(scaled, 0.0, 1.0), outside

    def invert(self, name: str, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.span[name] + self.lo[name]

    @property
    def variables(self) -> list[str]:
        return list(self.lo)

    def to_dict(self) -> dict:
        return {
            name: {"min": self.lo[name], "range": self.span[name], "levels": list(self.levels.get(name, ()))}
            for name in self.lo
        }


def fit_rescale(dataset: Dataset) -> RescaleMap:
    """Map the empirical support of W, Z, X (and Y, for diagnostics) onto [0, 1]."""
    if dataset.n < 2:
        raise BasisError(f"need at least 2 observations to fit a rescale map, got {dataset.n}")
    lo, span, levels = {}, {}, {}
    for name in ["w", "z", *dataset.x_names, "y"]:
        col = dataset.column(name)
        vmin, vmax = float(np.min(col)), float(np.max(col))
        if vmax - vmin <= 0:
            if name == "y":
                vmax = vmin + 1.0
            else:
                raise BasisError(f"variable {name!r} is constant; cannot rescale")
        lo[name], span[name] = vmin, vmax - vmin
        uniq = np.unique(col)
        if uniq.size <= MAX_DISCRETE_LEVELS:
            levels[name] = tuple(float(v) for v in uniq)
    return RescaleMap(lo, span, levels)


@dataclass(frozen=True)
class BasisSpec:
    """How to build one sieve family.

    ``degree`` is the polynomial degree (or spline degree) per continuous
    variable, either an int or a mapping from variable name.  ``count``
    truncates the tensor grid (by total degree) to that many functions per
    arm block.  ``discrete`` lists variables that get saturated indicator
    columns; ``"auto"`` picks every variable with at most
    ``MAX_DISCRETE_LEVELS`` observed levels.
    """

    family: str = "polynomial"
    degree: int | dict = 3
    knots: int = 4
    per_arm: bool = True
    count: int | None = None
    discrete: tuple[str, ...] | str = "auto"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BasisError(f"unknown basis family {self.family!r}; choose from {FAMILIES}")
        degrees = self.degree.values() if isinstance(self.degree, dict) else [self.degree]
        if any(int(d) < 1 for d in degrees):
            raise BasisError("all degrees must be >= 1")
        if self.knots < 0:
            raise BasisError("knots must be non-negative")
        if self.count is not None and self.count < 1:
            raise BasisError("count must be positive")

    def degree_for(self, name: str) -> int:
        if isinstance(self.degree, dict):
            return int(self.degree.get(name, self.degree.get("default", 3)))
        return int(self.degree)


def default_count(n: int) -> int:
    """Bridge-space size: 3 * ceil(n^(1/5)), capped at 30."""
    return min(30, 3 * math.ceil(n ** 0.2))


@dataclass(frozen=True)
class _Factor:
    name: str
    family: str
    size: int
    degree: int = 0
    knots: int = 0
    levels: tuple[float, ...] = ()

    def order(self, j: int) -> int:
        # Indicator columns are all "degree zero" so truncation keeps them together.
        return 0 if self.family == "indicator" else j

    def label(self, j: int) -> str:
        if self.family == "indicator":
            return f"1[{self.name}={self.levels[j]:g}]"
        if self.family == "bspline":
            return f"B{j}({self.name})"
        if self.family == "monomial":
            return f"{self.name}^{j}"
        return f"L{j}({self.name})"

    def evaluate(self, raw: np.ndarray, scaled: np.ndarray) -> np.ndarray:
        if self.family == "indicator":
            lv = np.asarray(self.levels)
            return np.isclose(raw[:, None], lv[None, :], rtol=0.0, atol=1e-9).astype(float)
        if self.family == "monomial":
            return scaled[:, None] ** np.arange(self.size)[None, :]
        if self.family == "polynomial":
            # Shifted Legendre, orthonormal on [0, 1].
            vals = legendre.legvander(2.0 * scaled - 1.0, self.size - 1)
            return vals * np.sqrt(2.0 * np.arange(self.size) + 1.0)[None, :]
        k = self.degree
        interior = np.linspace(0.0, 1.0, self.knots + 2)[1:-1]
        t = np.concatenate([np.zeros(k + 1), interior, np.ones(k + 1)])
        return BSpline.design_matrix(scaled, t, k).toarray()


@dataclass(frozen=True)
class BasisSet:
    """A fitted tensor-product sieve over ``roles`` (e.g. ``("w", "x")``)."""

    spec: BasisSpec
    roles: tuple[str, ...]
    factors: tuple[_Factor, ...]
    indices: tuple[tuple[int, ...], ...]
    rescale: RescaleMap

    @property
    def block_size(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return self.block_size * (2 if self.spec.per_arm else 1)

    @property
    def labels(self) -> list[str]:
        names = ["*".join(f.label(j) for f, j in zip(self.factors, idx)) or "1" for idx in self.indices]
        if not self.spec.per_arm:
            return names
        return [f"1[a={arm}]*{nm}" for arm in (0, 1) for nm in names]


def _variables(roles, rescale: RescaleMap) -> list[str]:
    out = []
    for role in roles:
        if role == "x":
            out.extend(v for v in rescale.variables if v.startswith("x") and v[1:].isdigit())
        elif role in ("w", "z", "a"):
            out.append(role)
        else:
            raise BasisError(f"unknown basis role {role!r}")
    return out


def build_basis(spec: BasisSpec, roles, rescale: RescaleMap) -> BasisSet:
    """Tensor-product family over the rescaled ``roles`` variables."""
    roles = tuple(roles)
    names = _variables(roles, rescale)
    if spec.discrete == "auto":
        discrete = {v for v in names if v in rescale.levels}
    else:
        discrete = set(spec.discrete)
        missing = [v for v in discrete & set(names) if v not in rescale.levels]
        if missing:
            raise BasisError(f"variables {sorted(missing)} have too many levels for an indicator basis")
    factors = []
    for v in names:
        if v == "a":
            factors.append(_Factor("a", "monomial", 2, degree=1))
        elif v in discrete or spec.family == "indicator":
            if v not in rescale.levels:
                raise BasisError(f"variable {v!r} has too many levels for an indicator basis")
            lv = rescale.levels[v]
            factors.append(_Factor(v, "indicator", len(lv), levels=lv))
        elif spec.family == "bspline":
            k = spec.degree_for(v)
            factors.append(_Factor(v, "bspline", spec.knots + k + 1, degree=k, knots=spec.knots))
        else:
            factors.append(_Factor(v, spec.family, spec.degree_for(v) + 1, degree=spec.degree_for(v)))
    grid = list(itertools.product(*[range(f.size) for f in factors]))
    capacity = len(grid)
    count = spec.count if spec.count is not None else capacity
    if count > capacity:
        raise BasisError(f"requested {count} basis functions but the tensor grid only has {capacity}")
    grid.sort(key=lambda idx: (sum(f.order(j) for f, j in zip(factors, idx)), idx))
    return BasisSet(spec, roles, tuple(factors), tuple(grid[:count]), rescale)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_labels: list[str]
    clamped: bool = False

    @property
    def shape(self):
        return self.values.shape


def evaluate(basis: BasisSet, dataset: Dataset, override_arm: int | None = None) -> DesignMatrix:
    """n x p matrix of basis evaluations; ``override_arm`` replaces every A."""
    n = dataset.n
    arms = dataset.a if override_arm is None else np.full(n, int(override_arm))
    clamped = False
    blocks = []
    for f in basis.factors:
        if f.name == "a":
            raw = arms.astype(float)
            scaled = raw
        else:
            raw = dataset.column(f.name)
            scaled, outside = basis.rescale.apply(f.name, raw)
            clamped |= outside and f.family != "indicator"
        blocks.append(f.evaluate(raw, scaled))
    values = np.ones((n, len(basis.indices)))
    idx = np.asarray(basis.indices, dtype=int).reshape(len(basis.indices), len(basis.factors))
    for k, block in enumerate(blocks):
        values *= block[:, idx[:, k]]
    if basis.spec.per_arm:
        ind1 = (arms == 1).astype(float)[:, None]
        values = np.hstack([values * (1.0 - ind1), values * ind1])
    if clamped:
        warnings.warn("evaluation points outside the training range were clamped", RuntimeWarning)
    return DesignMatrix(values, basis.labels, clamped)


def check_sizes(psi: BasisSet, phi: BasisSet) -> list[str]:
    """Diagnostics for the relative sizes of the two sieves."""
    notes = []
    if psi.size > phi.size:
        notes.append(
            f"bridge sieve ({psi.size}) is larger than the instrument sieve ({phi.size}); "
            "the criterion has a non-trivial null space in coefficient space"
        )
    return notes


def gram_min_eigenvalue(design: DesignMatrix) -> float:
    vals = design.values
    if vals.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(vals.T @ vals / vals.shape[0]).min())


def sized_spec(spec: BasisSpec, roles, rescale: RescaleMap, count: int) -> BasisSpec:
    """Fill in a default size: grow the per-variable degree (or knot count)
    until the tensor grid holds ``count`` functions, then truncate to it.
    Fully discrete roles are left saturated."""
    if spec.count is not None:
        return spec
    names = _variables(roles, rescale)
    discrete = {v for v in names if v in rescale.levels} if spec.discrete == "auto" else set(spec.discrete)
    continuous = [v for v in names if v not in discrete and v != "a"]
    if not continuous or spec.family == "indicator":
        return spec
    fixed = 1
    for v in names:
        if v == "a":
            fixed *= 2
        elif v in discrete:
            fixed *= len(rescale.levels[v])
    for step in range(1, 64):
        if spec.family == "bspline":
            k = spec.degree_for(continuous[0])
            per_var = step + k + 1
            candidate = replace(spec, knots=step)
        else:
            per_var = step + 1
            candidate = replace(spec, degree=step)
        if fixed * per_var ** len(continuous) >= count:
            return replace(candidate, count=count)
    raise BasisError(f"cannot reach {count} basis functions")
