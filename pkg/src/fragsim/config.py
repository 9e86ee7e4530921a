"""Run configuration read from a TOML file.

A minimal config::

    seed = 7
    alpha = 1.0
    n_paths = 100000
    times = [5.0, 10.0, 20.0]

    [kernel]
    family = "power_law"
    beta = 1.0

    [grid]
    x_min = 1e-4
    x_max = 50.0
    n_cells = 512

The environment variable ``FRAGSIM_SEED`` overrides ``seed``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .grid import LogGrid
from .kernel import Kernel, make_kernel

MODES = ("simulate", "pdmp", "shatter", "stationary", "moments", "pde", "converge", "sweep-check")

DEFAULT_TOLERANCES = {
    "tail_tol": 1e-12,
    # PDE distance to the stationary profile
    "l1_pde": 0.05,
    # rescaled Monte Carlo histogram distance to the profile
    "l1_mc": 0.03,
    "ks": 0.02,
    # consecutive-checkpoint L1 changes: below -> settled, above -> still moving
    "settled_change": 0.02,
    "sweep_change": 0.05,
}
DEFAULT_MC_GRID = {"x_min": 1e-4, "x_max": 50.0, "n_cells": 64}

_KNOWN = {
    "mode", "seed", "alpha", "kernel", "n_paths", "t_end", "times", "grid", "mc_grid",
    "initial", "dt", "n_moments", "tolerances", "threads", "tail_x0",
}


@dataclass
class RunConfig:
    mode: str
    seed: int
    alpha: float
    kernel: dict
    n_paths: int = 100_000
    t_end: float | None = None
    times: list = field(default_factory=list)
    grid: dict | None = None
    mc_grid: dict = field(default_factory=lambda: dict(DEFAULT_MC_GRID))
    initial: dict = field(default_factory=lambda: {"kind": "point", "x0": 1.0})
    dt: float | None = None
    n_moments: int = 4
    tolerances: dict = field(default_factory=dict)
    threads: int = 1
    tail_x0: float = 1.0
    base_dir: str = "."

    def __post_init__(self):
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.validate()

    # ------------------------------------------------------------ validation
    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if not (isinstance(self.alpha, (int, float)) and math.isfinite(self.alpha) and self.alpha != 0):
            raise ConfigError("alpha must be a finite nonzero number")
        if self.mode == "shatter":
            if self.alpha >= 0:
                raise ConfigError("mode shatter needs alpha < 0")
        elif self.alpha <= 0:
            raise ConfigError(f"mode {self.mode} needs alpha > 0")
        if not isinstance(self.kernel, dict) or "family" not in self.kernel:
            raise ConfigError("a [kernel] table with a 'family' key is required")
        if int(self.n_paths) < 1:
            raise ConfigError("n_paths must be >= 1")
        self.n_paths = int(self.n_paths)
        self.times = [float(t) for t in self.times]
        if any(t < 0 for t in self.times):
            raise ConfigError("times must be nonnegative")
        if self.t_end is None and self.times:
            self.t_end = max(self.times)
        if self.mode in ("simulate", "pdmp", "pde", "converge", "sweep-check"):
            if self.t_end is None or not self.t_end > 0:
                raise ConfigError(f"mode {self.mode} needs t_end > 0 or a list of times")
            if not self.times:
                self.times = [float(self.t_end)]
        if self.mode in ("pde", "converge", "sweep-check") and self.grid is None:
            raise ConfigError(f"mode {self.mode} needs a [grid] table")
        for g in (self.grid, self.mc_grid):
            if g is not None:
                LogGrid.from_spec(self._grid_keys(g))
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if int(self.n_moments) < 1:
            raise ConfigError("n_moments must be >= 1")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        kind = self.initial.get("kind", "point")
        if kind == "point":
            if not float(self.initial.get("x0", 1.0)) > 0:
                raise ConfigError("initial x0 must be positive")
        elif kind == "gamma":
            if not (float(self.initial.get("shape", 0)) > 0 and float(self.initial.get("scale", 1.0)) > 0):
                raise ConfigError("gamma initial data needs shape > 0 and scale > 0")
        elif kind == "csv":
            if "path" not in self.initial:
                raise ConfigError("csv initial data needs a path")
        else:
            raise ConfigError(f"unknown initial kind {kind!r}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {k} must be positive")

    @staticmethod
    def _grid_keys(g):
        missing = {"x_min", "x_max", "n_cells"} - set(g)
        if missing:
            raise ConfigError(f"grid table is missing {sorted(missing)}")
        return g

    # --------------------------------------------------------------- helpers
    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def make_kernel(self) -> Kernel:
        spec = dict(self.kernel)
        if spec.get("family") == "tabulated" and "path" in spec:
            spec["path"] = str(self.resolve(spec["path"]))
        return make_kernel(spec)

    def make_grid(self) -> LogGrid:
        return LogGrid.from_spec(self.grid)

    def make_mc_grid(self) -> LogGrid:
        return LogGrid.from_spec(self.mc_grid)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path, mode: str | None = None, env=None) -> RunConfig:
    """Read a TOML run config.  ``mode`` (from the command line) takes
    precedence over a ``mode`` key in the file, which must agree if given."""
    path = Path(path)
    env = os.environ if env is None else env
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, mode=mode, env=env, base_dir=str(path.parent))


def config_from_dict(raw: dict, mode: str | None = None, env=None, base_dir=".") -> RunConfig:
    raw = dict(raw)
    env = {} if env is None else env
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    file_mode = raw.pop("mode", None)
    if mode is not None and file_mode is not None and mode != file_mode:
        raise ConfigError(f"config is for mode {file_mode!r}, not {mode!r}")
    mode = mode or file_mode
    if mode is None:
        raise ConfigError("no mode given")
    if env.get("FRAGSIM_SEED"):
        try:
            raw["seed"] = int(env["FRAGSIM_SEED"])
        except ValueError:
            raise ConfigError("FRAGSIM_SEED must be an integer") from None
    if "seed" not in raw:
        raise ConfigError("seed is mandatory")
    for key in ("alpha", "kernel"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        return RunConfig(mode=mode, base_dir=base_dir, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
