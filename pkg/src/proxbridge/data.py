"""The observed-data container used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """n observations of (Y, A, Z, W, X).

    ``z`` and ``w`` are scalar proxies, ``x`` is an ``(n, d)`` covariate
    matrix (``d`` may be zero).
    """

    y: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        a = np.asarray(self.a).reshape(-1)
        z = np.asarray(self.z, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        n = y.shape[0]
        x = np.asarray(self.x, dtype=float)
        if x.size == 0:
            x = np.zeros((n, 0))
        elif x.ndim == 1:
            x = x.reshape(-1, 1)
        for name, col in (("a", a), ("z", z), ("w", w), ("x", x)):
            if col.shape[0] != n:
                raise DataError(f"column {name!r} has {col.shape[0]} rows, expected {n}")
        if n and not np.all((a == 0) | (a == 1)):
            bad = int(np.flatnonzero((a != 0) & (a != 1))[0])
            raise DataError(f"treatment must be binary; row {bad} has a={a[bad]!r}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a.astype(int))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    @property
    def x_names(self) -> list[str]:
        return [f"x{j + 1}" for j in range(self.d)]

    def column(self, name: str) -> np.ndarray:
        if name in ("y", "a", "z", "w"):
            return getattr(self, name)
        if name.startswith("x") and name[1:].isdigit():
            j = int(name[1:]) - 1
            if 0 <= j < self.d:
                return self.x[:, j]
        raise DataError(f"unknown column {name!r}")

    def with_arm(self, arm: int) -> "Dataset":
        return Dataset(self.y, np.full(self.n, int(arm)), self.z, self.w, self.x)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.a[idx], self.z[idx], self.w[idx], self.x[idx])

    @classmethod
    def empty(cls, d: int = 0) -> "Dataset":
        return cls(np.zeros(0), np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros((0, d)))
