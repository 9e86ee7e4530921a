"""Mode pipelines behind the command line.

Each ``run_<mode>`` takes a validated ``RunConfig`` and an output directory,
writes its CSV artifacts and returns the mode-specific part of the summary:
``metrics`` (numbers), ``checks`` (named pass/fail flags) and ``files``.
"""
from __future__ import annotations

import math
import warnings
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import pde, process, stationary, stats
from .config import RunConfig
from .errors import ConfigError, DivergenceWarning
from .grid import LogGrid
from .io import write_csv, write_json
from .kernel import Kernel

SELF_SIMILAR = "self-similar"
SWEEPING = "sweeping"
INCONCLUSIVE = "inconclusive"
DEFAULT_PROFILE_GRID = {"x_min": 1e-4, "x_max": 50.0, "n_cells": 512}


def analytic_verdict(kernel: Kernel) -> str:
    """Self-similar convergence iff ``E(-log theta) < inf``."""
    return SELF_SIMILAR if math.isfinite(kernel.mean_log()) else SWEEPING


def _initial(cfg: RunConfig):
    init = cfg.initial
    kind = init.get("kind", "point")
    if kind == "point":
        return float(init.get("x0", 1.0))
    if kind == "gamma":
        shape, scale = float(init["shape"]), float(init.get("scale", 1.0))
        return lambda u: sps.gamma.ppf(u, shape, scale=scale)
    raise ConfigError(f"initial kind {kind!r} is only available for the PDE")


def _pde_initial(cfg: RunConfig, grid: LogGrid) -> pde.PdeState:
    init = cfg.initial
    kind = init.get("kind", "point")
    if kind == "point":
        return pde.point_mass(grid, float(init.get("x0", 1.0)))
    if kind == "gamma":
        shape, scale = float(init["shape"]), float(init.get("scale", 1.0))
        return pde.from_mass_density(grid, lambda x: sps.gamma.pdf(x, shape, scale=scale))
    from .io import read_csv

    header, data = read_csv(cfg.resolve(init["path"]))
    if header[-1] != "mass":
        raise ConfigError("initial masses CSV needs a final 'mass' column")
    return pde.from_masses(grid, data[:, -1])


def _profile_or_none(kernel, alpha, cfg):
    if not math.isfinite(kernel.mean_log()):
        return None
    return stationary.stationary_profile(kernel, alpha, n_samples=cfg.n_paths, seed=cfg.seed, threads=cfg.threads)


def _paths_rows(values, times):
    n, k = values.shape
    pid = np.repeat(np.arange(n), k)
    tt = np.tile(np.asarray(times, dtype=float), n)
    return zip(pid, tt, values.ravel())


def _hist_rows(t, e: stats.EmpiricalDensity):
    return ((t, c, m) for c, m in zip(e.grid.centers, e.masses))


def _mass_checks(values, expected=1.0):
    live = stats.live_fraction(values)
    dev = stats.mass_conservation(values, expected)
    return live, dev


# ------------------------------------------------------------------- modes


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    params = process.ProcessParams(cfg.alpha, kernel, _initial(cfg))
    times = np.asarray(cfg.times)
    y = process.jump_process_ensemble(params, times, cfg.n_paths, cfg.seed, cfg.threads)
    files = [write_csv(out / "paths.csv", ["path_id", "t", "value"], _paths_rows(y, times))]
    live, dev = _mass_checks(y)
    g = process.gamma_factor(times, cfg.alpha)
    rescaled = y * g
    means = rescaled.mean(axis=0)
    ses = rescaled.std(axis=0, ddof=1) / math.sqrt(cfg.n_paths)
    metrics = {
        "times": times,
        "live_fraction": live,
        "mass_deviation": dev,
        "rescaled_mean": means,
        "rescaled_mean_stderr": ses,
    }
    checks = {"mass_conserved": bool(np.all(dev == 0))}
    profile = _profile_or_none(kernel, cfg.alpha, cfg)
    if profile is not None:
        grid = cfg.make_mc_grid()
        e = stats.empirical_density(rescaled[:, -1], grid)
        metrics["l1_rescaled_final"] = stats.distance(e, profile, "L1")
        files.append(write_csv(out / "histogram.csv", ["t", "cell_center", "mass"], _hist_rows(times[-1], e)))
    return {"metrics": metrics, "checks": checks, "files": files}


def run_pdmp(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    params = process.ProcessParams(cfg.alpha, kernel, _initial(cfg))
    times = np.asarray(cfg.times)
    x = process.pdmp_ensemble(params, times, cfg.n_paths, cfg.seed, cfg.threads)
    files = [write_csv(out / "paths.csv", ["path_id", "t", "value"], _paths_rows(x, times))]
    metrics = {"times": times, "mean": x.mean(axis=0)}
    checks = {}
    profile = _profile_or_none(kernel, cfg.alpha, cfg)
    if profile is not None:
        ks = [stats.ks_statistic(x[:, k], profile.mass_cdf) for k in range(times.size)]
        grid = cfg.make_mc_grid()
        e = stats.empirical_density(x[:, -1], grid)
        metrics["ks_to_profile"] = ks
        metrics["l1_to_profile_final"] = stats.distance(e, profile, "L1")
        checks["ks_final"] = bool(ks[-1] < cfg.tolerances["ks"])
        files.append(write_csv(out / "histogram.csv", ["t", "cell_center", "mass"], _hist_rows(times[-1], e)))
    return {"metrics": metrics, "checks": checks, "files": files}


def run_shatter(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    params = process.ProcessParams(cfg.alpha, kernel, _initial(cfg))
    times = np.asarray(cfg.times if cfg.times else [0.0])
    tol = cfg.tolerances["tail_tol"]
    i_inf, t_exp, values = process.shattering_ensemble(params, cfg.n_paths, cfg.seed, tol, times, cfg.threads)
    a = -cfg.alpha
    expected_mean = 1.0 / kernel.laplace_exponent(a)
    mean, se = stats.mean_and_stderr(i_inf)
    live = stats.live_fraction(values)
    # independent prediction: I_inf has the law of the perpetuity with exponent |alpha|
    y0 = params.initial_values(cfg.seed, 0, cfg.n_paths)
    other = stationary.sample_Zinf(kernel, a, cfg.n_paths, cfg.seed, tol, threads=cfg.threads)
    predicted = np.array([np.mean(y0**a * other > t) for t in times])
    se_diff = np.sqrt(
        np.array([stats.proportion_stderr(p, cfg.n_paths) ** 2 for p in live])
        + np.array([stats.proportion_stderr(p, cfg.n_paths) ** 2 for p in predicted])
    )
    gap = np.abs(live - predicted)
    files = [
        write_csv(out / "paths.csv", ["path_id", "t", "value"], _paths_rows(values, times)),
        write_csv(
            out / "explosion.csv",
            ["path_id", "explosion_time", "exp_functional"],
            zip(np.arange(cfg.n_paths), t_exp, i_inf),
        ),
    ]
    metrics = {
        "mean_exp_functional": mean,
        "mean_exp_functional_stderr": se,
        "expected_mean_exp_functional": expected_mean,
        "times": times,
        "live_fraction": live,
        "predicted_live_fraction": predicted,
        "live_fraction_stderr": se_diff,
    }
    checks = {
        "mean_exp_functional": bool(abs(mean - expected_mean) < 3 * se),
        "live_fraction": bool(np.all((gap <= 3 * se_diff) | (gap == 0))),
    }
    return {"metrics": metrics, "checks": checks, "files": files}


def run_stationary(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    alpha, n, seed = cfg.alpha, cfg.n_paths, cfg.seed
    tol = cfg.tolerances["tail_tol"]
    files = []
    metrics = {}
    checks = {}
    profile = _profile_or_none(kernel, alpha, cfg)
    if profile is not None:
        grid = LogGrid.from_spec(cfg.grid or DEFAULT_PROFILE_GRID)
        x = grid.centers
        files.append(write_csv(out / "profile.csv", ["x", "u_star", "mass_density"], profile.table(x)))
        masses, below, above = profile.cell_masses(grid)
        files.append(write_csv(out / "profile_cells.csv", ["cell_center", "mass"], zip(x, masses)))
        metrics["profile"] = profile.describe()
        metrics["profile_mass"] = profile.mass()
        checks["profile_mass"] = bool(abs(metrics["profile_mass"] - 1.0) < 1e-8)
    xa = stationary.sample_Xinf_alpha(kernel, alpha, n, seed, tol, threads=cfg.threads)
    m = kernel.moment(alpha)
    mean, se = stats.mean_and_stderr(xa)
    metrics["mean_xinf_alpha"] = mean
    metrics["mean_xinf_alpha_stderr"] = se
    metrics["expected_mean_xinf_alpha"] = m / (1.0 - m)
    checks["mean_xinf_alpha"] = bool(abs(mean - m / (1.0 - m)) < 3 * se)
    if n >= 1000:
        ks = stationary.fixed_point_distance(kernel, alpha, n, seed, tail_tol=tol, threads=cfg.threads)
        metrics["fixed_point_ks"] = ks
        metrics["fixed_point_ks_critical"] = stats.ks_critical(n, n)
        checks["fixed_point"] = bool(ks < stats.ks_critical(n, n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DivergenceWarning)
        fj = stationary.mean_first_jump_time_stationary(kernel, alpha, n, seed, tol, cfg.threads)
    metrics["first_jump_mean"] = fj.mean
    metrics["first_jump_stderr"] = fj.stderr
    metrics["first_jump_target"] = fj.target
    metrics["first_jump_running_means"] = fj.running_means
    metrics["first_jump_checkpoints"] = fj.checkpoints
    if not fj.diverging:
        checks["first_jump_mean"] = bool(abs(fj.z_score) < 3)
    return {"metrics": metrics, "checks": checks, "files": files}


def run_moments(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    orders = list(range(1, int(cfg.n_moments) + 1))
    exact = [stationary.moment_Zinf(kernel, cfg.alpha, k) for k in orders]
    z = stationary.sample_Zinf(kernel, cfg.alpha, cfg.n_paths, cfg.seed, cfg.tolerances["tail_tol"], threads=cfg.threads)
    mc, se = zip(*(stats.mean_and_stderr(z**k) for k in orders))
    zscores = [(a - b) / s for a, b, s in zip(mc, exact, se)]
    files = [write_json(out / "moments.json", {"order": orders, "exact": exact, "mc": mc, "mc_stderr": se})]
    metrics = {"moments": exact, "mc_moments": list(mc), "mc_stderr": list(se), "z_scores": zscores}
    checks = {f"moment_{k}": bool(abs(zs) < 3) for k, zs in zip(orders, zscores) if k <= 4}
    return {"metrics": metrics, "checks": checks, "files": files}


def _pde_run(cfg, kernel):
    grid = cfg.make_grid()
    solver = pde.build_solver(kernel, cfg.alpha, grid)
    state = _pde_initial(cfg, grid)
    dt = cfg.dt if cfg.dt is not None else solver.max_dt()
    snaps = solver.evolve(state, cfg.t_end, dt=dt, times=cfg.times)
    by_time = {s.t: s for s in snaps}
    chosen = [by_time[t] if t in by_time else state for t in cfg.times]
    return grid, solver, state, dt, chosen


def run_pde(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.make_kernel()
    grid, solver, init, dt, snaps = _pde_run(cfg, kernel)
    rows = (r for s in snaps for r in ((s.t, c, w) for c, w in zip(grid.centers, s.masses)))
    files = [write_csv(out / "snapshots.csv", ["t", "cell_center", "mass"], rows)]
    final = snaps[-1]
    t_frag, frag_grid, frag_masses = pde.transport_to_fragmentation(final, cfg.alpha)
    files.append(
        write_csv(out / "fragmentation.csv", ["t", "cell_center", "mass"], ((t_frag, c, w) for c, w in zip(frag_grid.centers, frag_masses)))
    )
    drift = [abs(s.total - init.total) for s in snaps]
    metrics = {
        "times": cfg.times,
        "dt": dt,
        "cfl": solver.cfl_numbers(dt),
        "leaked_low": final.leaked_low,
        "leaked_high": final.leaked_high,
        "mass_drift": drift,
        "tail_mass": [pde.tail_mass(s, cfg.tail_x0) for s in snaps],
        "t_frag_final": t_frag,
    }
    checks = {"mass_conserved": bool(max(drift) < 1e-10)}
    profile = _profile_or_none(kernel, cfg.alpha, cfg)
    if profile is not None:
        metrics["l1_to_profile"] = [pde.l1_distance_to_profile(s, profile) for s in snaps]
    return {"metrics": metrics, "checks": checks, "files": files}


def empirical_verdict(tail_masses, changes, l1_pde=None, l1_mc=None, tol=None) -> str:
    """Classify a checkpoint run.

    Sweeping: the mass above the reference size strictly decreases and the
    profile keeps moving (every consecutive L1 change above ``sweep_change``).
    Self-similar: the final distances to the stationary profile are below
    their tolerances, or, without a profile, the last change is below
    ``settled_change``.
    """
    tail = np.asarray(tail_masses, dtype=float)
    changes = np.asarray(changes, dtype=float)
    if tail.size > 1 and np.all(np.diff(tail) < 0) and changes.size and np.all(changes > tol["sweep_change"]):
        return SWEEPING
    if l1_pde is not None:
        ok = l1_pde < tol["l1_pde"] and (l1_mc is None or l1_mc < tol["l1_mc"])
        return SELF_SIMILAR if ok else INCONCLUSIVE
    if changes.size and changes[-1] < tol["settled_change"]:
        return SELF_SIMILAR
    return INCONCLUSIVE


def run_dichotomy(cfg: RunConfig, out: Path) -> dict:
    """Shared pipeline of ``converge`` and ``sweep-check``: PDE checkpoints,
    Monte Carlo cross-checks and the two verdicts."""
    kernel = cfg.make_kernel()
    tol = cfg.tolerances
    times = np.asarray(cfg.times)
    grid, solver, init, dt, snaps = _pde_run(cfg, kernel)
    tail_pde = [pde.tail_mass(s, cfg.tail_x0) for s in snaps]
    changes = [pde.l1_distance(a, b) for a, b in zip(snaps[:-1], snaps[1:])]

    params = process.ProcessParams(cfg.alpha, kernel, _initial(cfg))
    x = process.pdmp_ensemble(params, times, cfg.n_paths, cfg.seed, cfg.threads)
    tail_mc = np.mean(x > cfg.tail_x0, axis=0)

    metrics = {
        "times": times,
        "dt": dt,
        "cfl": solver.cfl_numbers(dt),
        "tail_x0": cfg.tail_x0,
        "tail_mass_pde": tail_pde,
        "tail_mass_mc": tail_mc,
        "l1_change": changes,
        "mass_drift": max(abs(s.total - init.total) for s in snaps),
        "leaked_low": snaps[-1].leaked_low,
        "leaked_high": snaps[-1].leaked_high,
    }
    rows = (r for s in snaps for r in ((s.t, c, w) for c, w in zip(grid.centers, s.masses)))
    files = [write_csv(out / "pde_checkpoints.csv", ["t", "cell_center", "mass"], rows)]
    l1_pde = l1_mc = None
    table_cols = {"t": times, "tail_mass_pde": tail_pde, "tail_mass_mc": tail_mc}
    profile = _profile_or_none(kernel, cfg.alpha, cfg)
    if profile is not None:
        l1_pde_all = [pde.l1_distance_to_profile(s, profile) for s in snaps]
        # rescaled jump process: gamma(t_f) Y(t_f) with log gamma(t_f) equal to the PDE time
        t_frag = np.expm1(cfg.alpha * times)
        y = process.jump_process_ensemble(params, t_frag, cfg.n_paths, cfg.seed, cfg.threads)
        mc_grid = cfg.make_mc_grid()
        hists = [stats.empirical_density(y[:, k] * math.exp(t), mc_grid) for k, t in enumerate(times)]
        l1_mc_all = [stats.distance(h, profile, "L1") for h in hists]
        l1_pde, l1_mc = l1_pde_all[-1], l1_mc_all[-1]
        metrics.update(l1_pde=l1_pde_all, l1_mc=l1_mc_all, t_frag=t_frag)
        table_cols.update(l1_pde=l1_pde_all, l1_mc=l1_mc_all)
        files.append(
            write_csv(
                out / "mc_histograms.csv",
                ["t", "cell_center", "mass"],
                (r for t, h in zip(times, hists) for r in _hist_rows(t, h)),
            )
        )
    files.append(write_csv(out / "dichotomy.csv", list(table_cols), zip(*table_cols.values())))
    analytic = analytic_verdict(kernel)
    empirical = empirical_verdict(tail_pde, changes, l1_pde, l1_mc, tol)
    checks = {
        "mass_conserved": bool(metrics["mass_drift"] < 1e-10),
        "verdict_agreement": analytic == empirical,
    }
    if profile is not None:
        checks["l1_pde"] = bool(l1_pde < tol["l1_pde"])
        checks["l1_mc"] = bool(l1_mc < tol["l1_mc"])
    else:
        checks["tail_mass_decreasing"] = bool(np.all(np.diff(tail_pde) < 0))
        checks["no_l1_stabilization"] = bool(np.all(np.asarray(changes) > tol["sweep_change"]))
    return {
        "metrics": metrics,
        "checks": checks,
        "files": files,
        "verdict_analytic": analytic,
        "verdict_empirical": empirical,
    }


MODES = {
    "simulate": run_simulate,
    "pdmp": run_pdmp,
    "shatter": run_shatter,
    "stationary": run_stationary,
    "moments": run_moments,
    "pde": run_pde,
    "converge": run_dichotomy,
    "sweep-check": run_dichotomy,
}
