from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LogGrid:
    """Log-uniform cells ``[x_min r^i, x_min r^(i+1))``, ``i = 0..n_cells-1``."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (0 < self.x_min < self.x_max and math.isfinite(self.x_max)):
            raise ConfigError(f"need 0 < x_min < x_max, got {self.x_min}, {self.x_max}")
        if int(self.n_cells) < 1:
            raise ConfigError("n_cells must be >= 1")

    @property
    def edges(self) -> np.ndarray:
        e = self.x_min * np.exp(self.dy * np.arange(self.n_cells + 1))
        e[-1] = self.x_max
        return e

    @property
    def ratio(self) -> float:
        return math.exp(self.dy)

    @property
    def dy(self) -> float:
        """Cell width in ``log x``."""
        return math.log(self.x_max / self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return np.sqrt(e[:-1] * e[1:])

    def coarsen(self, factor: int) -> "LogGrid":
        if self.n_cells % factor:
            raise ConfigError(f"{self.n_cells} cells cannot be coarsened by {factor}")
        return LogGrid(self.x_min, self.x_max, self.n_cells // factor)

    def scaled(self, s: float) -> "LogGrid":
        """The same cells with coordinates multiplied by ``s``."""
        return LogGrid(self.x_min * s, self.x_max * s, self.n_cells)

    def locate(self, x):
        """Cell index of ``x``; -1 below the grid and ``n_cells`` above it."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.where(x >= self.x_max, self.n_cells, idx)

    @classmethod
    def from_spec(cls, spec) -> "LogGrid":
        return cls(float(spec["x_min"]), float(spec["x_max"]), int(spec["n_cells"]))

    def to_spec(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_cells": self.n_cells}


def coarsen_masses(masses, factor: int):
    masses = np.asarray(masses, dtype=float)
    return masses.reshape(-1, factor).sum(axis=1)
