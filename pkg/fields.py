"""
Grid field containers for functions on the unit circle and the unit square
"""

from dataclasses import dataclass, field
from typing import Dict, Any

import numpy as np


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GridField:
    """
    Uniformly sampled function on the circle of circumference one,
    values[i] = u(i / n_g). Values are a private read-only copy.
    """
    values: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("GridField values must be a nonempty 1D array")
        object.__setattr__(self, "values", values)

    @property
    def n_g(self) -> int:
        return int(self.values.size)

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_g

    def grid_points(self) -> np.ndarray:
        return np.arange(self.n_g) / self.n_g

    def l2_norm(self) -> float:
        """Grid L2 norm, sqrt((1/n_g) sum u_i^2)"""
        return float(np.sqrt(np.mean(self.values ** 2)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @classmethod
    def zeros(cls, n_g: int) -> "GridField":
        return cls(np.zeros(n_g))


@dataclass(frozen=True, eq=False)
class GridField2D:
    """n x n read-only array on the unit square; node (i, j) sits at (i h, j h) with h = 1/n"""
    values: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("GridField2D values must be a square 2D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("GridField2D values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    def coordinates(self):
        """Meshgrid (X, Y) with X varying along axis 0"""
        axis = np.arange(self.n) * self.spacing
        return np.meshgrid(axis, axis, indexing="ij")
