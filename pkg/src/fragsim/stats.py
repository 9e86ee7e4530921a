"""Empirical densities and distances.

Histograms are probability (mass) histograms on a ``LogGrid``: if ``Y(t)``
has law ``c(t, x) x dx`` the bin fractions estimate the cell masses of that
measure directly.  Samples outside the grid are kept as underflow/overflow
counts and always count in distances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import LogGrid


@dataclass
class EmpiricalDensity:
    grid: LogGrid
    counts: np.ndarray
    underflow: int
    overflow: int

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum() + self.underflow + self.overflow)

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.n_samples

    @property
    def below(self) -> float:
        return self.underflow / self.n_samples

    @property
    def above(self) -> float:
        return self.overflow / self.n_samples

    def total(self) -> float:
        return float(self.masses.sum() + self.below + self.above)

    def merge(self, other: "EmpiricalDensity") -> "EmpiricalDensity":
        """Combine partial histograms of disjoint sample sets."""
        if other.grid != self.grid:
            raise ConfigError("cannot merge histograms on different grids")
        return EmpiricalDensity(
            self.grid, self.counts + other.counts, self.underflow + other.underflow, self.overflow + other.overflow
        )

    def cell_masses(self, grid: LogGrid):
        if grid != self.grid:
            raise ConfigError("incompatible grids")
        return self.masses, self.below, self.above

    def table(self):
        """Rows ``(cell_center, mass)``."""
        return np.column_stack([self.grid.centers, self.masses])


def empirical_density(samples, grid: LogGrid) -> EmpiricalDensity:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ConfigError("empty sample set")
    if np.any(np.isnan(x)):
        raise ConfigError("samples contain NaN")
    idx = grid.locate(x)
    under = int(np.count_nonzero(idx < 0))
    over = int(np.count_nonzero(idx >= grid.n_cells))
    inside = idx[(idx >= 0) & (idx < grid.n_cells)]
    counts = np.bincount(inside, minlength=grid.n_cells).astype(np.int64)
    return EmpiricalDensity(grid, counts, under, over)


def _parts(obj, grid):
    m, lo, hi = obj.cell_masses(grid)
    return np.asarray(m, dtype=float), float(lo), float(hi)


def distance(e: EmpiricalDensity, target, mode: str = "L1") -> float:
    """L1 or KS distance between a histogram and another histogram or a
    stationary profile, on ``e``'s grid.

    The mass below and above the grid is treated as two extra cells, so L1
    is ``sum |dm| + |d below| + |d above|`` and KS is the largest gap of the
    cumulative masses including the underflow cell.
    """
    grid = e.grid
    a = _parts(e, grid)
    b = _parts(target, grid)
    if a[0].shape != b[0].shape:
        raise ConfigError("incompatible grids")
    if mode.upper() == "L1":
        return float(np.abs(a[0] - b[0]).sum() + abs(a[1] - b[1]) + abs(a[2] - b[2]))
    if mode.upper() == "KS":
        ca = a[1] + np.concatenate([[0.0], np.cumsum(a[0])])
        cb = b[1] + np.concatenate([[0.0], np.cumsum(b[0])])
        return float(np.max(np.abs(ca - cb)))
    raise ConfigError(f"unknown distance mode {mode!r}")


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic against a continuous CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ConfigError("empty sample set")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ConfigError("empty sample set")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n: int, m: int | None = None, coef: float = 1.63) -> float:
    """Asymptotic 1% critical value ``1.63 sqrt(1/n + 1/m)`` (one-sample if
    ``m`` is None)."""
    if m is None:
        return coef / math.sqrt(n)
    return coef * math.sqrt(1.0 / n + 1.0 / m)


def live_fraction(values) -> np.ndarray:
    """Fraction of paths with positive value at each observation time;
    ``values`` has shape ``(n_paths, n_times)``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.mean(v > 0, axis=0)


def mass_conservation(values, expected) -> np.ndarray:
    """``|live fraction - expected|`` at each observation time.

    With unit initial mass the mass carried at time ``t`` equals the
    probability that the tagged fragment is still of positive size."""
    return np.abs(live_fraction(values) - np.asarray(expected, dtype=float))


def mean_and_stderr(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def proportion_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)
