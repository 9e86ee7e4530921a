"""Homogeneous breakup laws.

A homogeneous kernel ``b(x, y) = h(x/y)/y`` is described entirely by the law
of the fragment ratio ``theta`` in (0, 1).  Everything here works with the
mass-weighted density ``g(z) = z h(z)``, which is the density of ``theta``,
its distribution function ``H`` and the inverse ``H^{-1}``.

Three families are available:

``PowerLaw(beta)``
    ``g(z) = beta z^(beta-1)``, so ``theta = U^(1/beta)``.
``Mixture(p, beta1, beta2)``
    ``g = p g_beta1 + (1-p) g_beta2``.
``Tabulated(nodes, values)``
    user table of ``g``; the distribution function is piecewise linear
    between the nodes, which makes inverse sampling exact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import integrate

from .errors import ConfigError

# dyadic-band divergence test for E(-log theta) on tabulated kernels
N_LOG_BANDS = 60
LOG_BAND_TOL = 1e-6


class Kernel:
    """Law of the fragment ratio ``theta``.  Instances are immutable."""

    family: str = ""

    def density(self, z):
        """Mass-weighted density ``g(z) = z h(z)`` on (0, 1)."""
        raise NotImplementedError

    def h(self, z):
        z = np.asarray(z, dtype=float)
        return self.density(z) / z

    def cdf(self, z):
        raise NotImplementedError

    def ppf(self, u):
        """Inverse distribution function ``H^{-1}``."""
        raise NotImplementedError

    def transform(self, u):
        """Map uniforms in (0, 1) to draws of ``theta``; every sampler goes
        through here.  Defaults to the inverse CDF."""
        return self.ppf(u)

    def moment(self, q: float) -> float:
        raise NotImplementedError

    def mean_log(self) -> float:
        raise NotImplementedError

    def laplace_exponent(self, q: float) -> float:
        """``phi(q) = E(1 - theta^q)``."""
        return 1.0 - self.moment(q)

    def to_spec(self) -> dict:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        """I.i.d. draws of ``theta`` by inverse transform."""
        u = rng.random(size) + 2.0**-54
        return self.transform(u)

    @property
    def normalizer(self) -> float:
        return 1.0

    def describe(self) -> str:
        spec = self.to_spec()
        args = ", ".join(f"{k}={v}" for k, v in spec.items() if k not in ("family",))
        return f"{self.family}({args})"


def _check_q(q):
    if not q >= 0:
        raise ConfigError(f"moment order must be >= 0, got {q}")


@dataclass(frozen=True)
class PowerLaw(Kernel):
    beta: float
    family: str = field(default="power_law", init=False)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive, got {self.beta}")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.beta * z ** (self.beta - 1.0)
        return np.where((z > 0) & (z < 1), g, 0.0)

    def cdf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return z**self.beta

    def ppf(self, u):
        return np.asarray(u, dtype=float) ** (1.0 / self.beta)

    def moment(self, q):
        _check_q(q)
        return self.beta / (self.beta + q)

    def laplace_exponent(self, q):
        # q/(beta+q) avoids the cancellation in 1 - moment for small q
        _check_q(q)
        return q / (self.beta + q)

    def mean_log(self):
        return 1.0 / self.beta

    def to_spec(self):
        return {"family": self.family, "beta": self.beta}


@dataclass(frozen=True)
class Mixture(Kernel):
    p: float
    beta1: float
    beta2: float
    family: str = field(default="mixture", init=False)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")
        for b in (self.beta1, self.beta2):
            if not (b > 0 and math.isfinite(b)):
                raise ConfigError(f"beta must be positive, got {b}")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z > 0) & (z < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.p * self.beta1 * z ** (self.beta1 - 1.0) + (1 - self.p) * self.beta2 * z ** (
                self.beta2 - 1.0
            )
        return np.where(inside, g, 0.0)

    def cdf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return self.p * z**self.beta1 + (1 - self.p) * z**self.beta2

    def ppf(self, u):
        # H is strictly increasing; bisection in log z resolves the power-law
        # behaviour near 0 and needs no starting guess
        u = np.asarray(u, dtype=float)
        lo = np.full(u.shape, -745.0)
        hi = np.zeros(u.shape)
        for _ in range(96):
            mid = 0.5 * (lo + hi)
            below = self.cdf(np.exp(mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return np.where(u > 0, np.exp(0.5 * (lo + hi)), 0.0)

    def transform(self, u):
        # one uniform selects the component and is then reused inside it
        u = np.asarray(u, dtype=float)
        p = self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            first = (u / p) ** (1.0 / self.beta1) if p > 0 else np.zeros_like(u)
            second = ((u - p) / (1.0 - p)) ** (1.0 / self.beta2) if p < 1 else np.zeros_like(u)
        return np.where(u < p, first, second)

    def moment(self, q):
        _check_q(q)
        return self.p * self.beta1 / (self.beta1 + q) + (1 - self.p) * self.beta2 / (self.beta2 + q)

    def laplace_exponent(self, q):
        _check_q(q)
        return self.p * q / (self.beta1 + q) + (1 - self.p) * q / (self.beta2 + q)

    def mean_log(self):
        return self.p / self.beta1 + (1 - self.p) / self.beta2

    def to_spec(self):
        return {"family": self.family, "p": self.p, "beta1": self.beta1, "beta2": self.beta2}


@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Kernel from a table of ``g`` at strictly increasing nodes in (0, 1).

    The mass below the first node is estimated by extending ``g`` as a power
    law fitted to the first two nodes (a constant when that power law is not
    integrable), above the last node ``g`` is held constant, and between
    nodes the integral is a trapezoid in ``log z``.  The cumulative masses at
    the nodes are then rescaled so that ``H(1) = 1``; ``raw_mass`` keeps the
    value before rescaling and ``scale_factor = 1/raw_mass``.

    The law that is sampled and integrated is the one with piecewise-linear
    ``H`` through these knots, i.e. piecewise-constant ``g``.
    """

    nodes: np.ndarray
    values: np.ndarray
    source: str = ""
    family: str = field(default="tabulated", init=False)

    def __post_init__(self):
        z = np.asarray(self.nodes, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if z.ndim != 1 or z.shape != g.shape or z.size < 2:
            raise ConfigError("tabulated kernel needs matching 1-d node/value arrays of length >= 2")
        if not (np.all(z > 0) and np.all(z < 1)):
            raise ConfigError("tabulated nodes must lie in (0, 1)")
        if np.any(np.diff(z) <= 0):
            raise ConfigError("tabulated nodes must be strictly increasing")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ConfigError("tabulated values must be finite and nonnegative")
        if not np.any(g > 0):
            raise ConfigError("tabulated g is identically zero")

        logz = np.log(z)
        inner = 0.5 * (g[1:] * z[1:] + g[:-1] * z[:-1]) * np.diff(logz)
        head = z[0] * g[0]
        if g[0] > 0 and g[1] > 0:
            slope = math.log(g[1] / g[0]) / (logz[1] - logz[0])
            if slope > -1.0:
                head = z[0] * g[0] / (slope + 1.0)
        tail = g[-1] * (1.0 - z[-1])
        cum = np.concatenate([[0.0, head], head + np.cumsum(inner)])
        raw = cum[-1] + tail
        knots_z = np.concatenate([[0.0], z, [1.0]])
        knots_h = np.concatenate([cum, [raw]]) / raw
        knots_h[-1] = 1.0
        seg_g = np.diff(knots_h) / np.diff(knots_z)

        object.__setattr__(self, "nodes", z)
        object.__setattr__(self, "values", g)
        object.__setattr__(self, "_raw_mass", float(raw))
        object.__setattr__(self, "_kz", knots_z)
        object.__setattr__(self, "_kh", knots_h)
        object.__setattr__(self, "_kg", seg_g)
        object.__setattr__(self, "_neglog_cum", self._build_neglog_cum())

    @property
    def raw_mass(self) -> float:
        return self._raw_mass

    @property
    def normalizer(self) -> float:
        return self._raw_mass

    @property
    def scale_factor(self) -> float:
        return 1.0 / self._raw_mass

    @property
    def knots(self):
        return self._kz.copy(), self._kh.copy()

    def density(self, z):
        z = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self._kz, z, side="right") - 1, 0, self._kg.size - 1)
        return np.where((z > 0) & (z < 1), self._kg[idx], 0.0)

    def cdf(self, z):
        return np.interp(np.asarray(z, dtype=float), self._kz, self._kh)

    def ppf(self, u):
        return np.interp(np.asarray(u, dtype=float), self._kh, self._kz)

    def moment(self, q):
        _check_q(q)
        a, b = self._kz[:-1], self._kz[1:]
        return float(np.sum(self._kg * (b ** (q + 1) - a ** (q + 1))) / (q + 1))

    @staticmethod
    def _f(z):
        # antiderivative of -log z, continuous at 0
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z > 0, z - z * np.log(np.where(z > 0, z, 1.0)), 0.0)

    def _build_neglog_cum(self):
        pieces = self._kg * (self._f(self._kz[1:]) - self._f(self._kz[:-1]))
        return np.concatenate([[0.0], np.cumsum(pieces)])

    def neglog_partial(self, z):
        """``int_0^z (-log s) g(s) ds`` under the piecewise-constant law."""
        z = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self._kz, z, side="right") - 1, 0, self._kg.size - 1)
        return self._neglog_cum[idx] + self._kg[idx] * (self._f(z) - self._f(self._kz[idx]))

    def log_bands(self, n_bands=N_LOG_BANDS):
        """Contributions to ``E(-log theta)`` of the bands ``(2^-(n+1), 2^-n)``."""
        edges = 2.0 ** -np.arange(n_bands + 1, dtype=float)
        cum = self.neglog_partial(edges)
        return cum[:-1] - cum[1:]

    def mean_log(self):
        remainder = float(self.neglog_partial(2.0**-N_LOG_BANDS))
        if remainder > LOG_BAND_TOL:
            return math.inf
        return float(self._neglog_cum[-1])

    def to_spec(self):
        spec = {"family": self.family, "n_nodes": int(self.nodes.size)}
        if self.source:
            spec["path"] = self.source
        return spec


def make_kernel(spec: Mapping | Kernel) -> Kernel:
    """Build a kernel from a config mapping such as ``{"family": "power_law", "beta": 2}``.

    Tabulated kernels are read from a CSV with header ``z,g`` (key ``path``),
    or built in memory from ``nodes``/``values`` arrays.
    """
    if isinstance(spec, Kernel):
        return spec
    spec = dict(spec)
    family = spec.pop("family", None)
    try:
        if family == "power_law":
            return PowerLaw(float(spec["beta"]))
        if family == "mixture":
            return Mixture(float(spec["p"]), float(spec["beta1"]), float(spec["beta2"]))
        if family == "tabulated":
            if "path" in spec:
                z, g = read_table(spec["path"])
                return Tabulated(z, g, source=str(spec["path"]))
            return Tabulated(np.asarray(spec["nodes"], float), np.asarray(spec["values"], float))
    except KeyError as exc:
        raise ConfigError(f"kernel spec for {family!r} is missing {exc}") from None
    raise ConfigError(f"unknown kernel family {family!r}")


def read_table(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"z", "g"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected a CSV header 'z,g'")
        rows = [(float(r["z"]), float(r["g"])) for r in reader]
    if not rows:
        raise ConfigError(f"{path}: empty table")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def write_table(path, nodes, values):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("z,g\n")
        for z, g in zip(nodes, values):
            fh.write(f"{z:.17g},{g:.17g}\n")


def log_divergent_table(n_nodes=10_000, z_min=1e-300):
    """Nodes and values of ``g(z) = 1/(z log(e/z)^2)`` on a log grid.

    This ``g`` integrates to one but ``E(-log theta)`` is infinite.
    """
    z = np.geomspace(z_min, 1.0, n_nodes + 1)[:-1]
    return z, log_divergent_g(z)


def log_divergent_g(z):
    z = np.asarray(z, dtype=float)
    return 1.0 / (z * (1.0 - np.log(z)) ** 2)


def quad_moment(kernel: Kernel, q: float, rel_tol: float = 1e-9) -> float:
    """``E theta^q`` by adaptive quadrature of ``z^q g(z)``, for any family."""
    _check_q(q)
    if isinstance(kernel, Tabulated):
        kz = kernel.knots[0]
        total = 0.0
        for a, b, gk in zip(kz[:-1], kz[1:], kernel._kg):
            total += gk * integrate.quad(lambda z: z**q, a, b, epsrel=rel_tol)[0]
        return total

    def f(y):
        # z = e^-y keeps integrable endpoint singularities smooth
        z = math.exp(-y)
        return float(kernel.density(z)) * z ** (q + 1)

    val, _ = integrate.quad(f, 0.0, np.inf, epsrel=rel_tol, epsabs=0.0, limit=400)
    return val


def laplace_exponent(kernel: Kernel, q: float) -> float:
    """``phi(q) = E(1 - theta^q)``."""
    if not q > 0:
        raise ConfigError(f"Laplace exponent needs q > 0, got {q}")
    return kernel.laplace_exponent(q)


def moment(kernel: Kernel, q: float) -> float:
    return kernel.moment(q)


def mean_log(kernel: Kernel) -> float:
    return kernel.mean_log()


def sample_theta(kernel: Kernel, rng: np.random.Generator, size=None):
    return kernel.sample(rng, size)
