"""Event-driven simulation of the fragmentation processes.

``Y(t)`` is the pure-jump fragmentation process: it sits at ``y`` for an
exponential holding time of rate ``y^alpha`` and then jumps to ``theta y``.
``X(t)`` is the growth-fragmentation PDMP obtained from ``Y`` by the
self-similar zoom; it grows as ``e^t x`` between jumps and jumps at rate
``alpha x^alpha``.  Both consume the same ``(epsilon_n, theta_n)`` draws, so
``Y(t) = X(log gamma(t)) / gamma(t)`` with ``gamma(t) = (1 + t)^(1/alpha)``
holds path by path.

For ``alpha < 0`` the jump process explodes at the finite time
``Y_0^(-alpha) I_inf`` (shattering) and is absorbed at 0 afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np

from . import streams
from .errors import ConfigError, NumericError
from .kernel import Kernel

Initial = Union[float, Callable[[np.ndarray], np.ndarray]]

# expected-tail safety factor for truncating the explosion-time series
TAIL_SAFETY = 10.0


@dataclass(frozen=True)
class ProcessParams:
    """``alpha`` is the exponent of the breakage rate ``a(x) = x^alpha``.

    ``initial`` is either a point ``x0 > 0`` or a sampler mapping an array of
    uniforms in (0, 1) to initial values (an inverse CDF).
    """

    alpha: float
    kernel: Kernel
    initial: Initial = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha != 0):
            raise ConfigError(f"alpha must be finite and nonzero, got {self.alpha}")
        if not callable(self.initial) and not float(self.initial) > 0:
            raise ConfigError(f"initial value must be positive, got {self.initial}")

    def initial_values(self, seed, start, stop):
        if not callable(self.initial):
            return np.full(stop - start, float(self.initial))
        u = streams.PathStreams(seed, streams.INITIAL, start, stop, width=1).draw(0)[0]
        x = np.asarray(self.initial(u), dtype=float)
        if np.any(~(x > 0)):
            raise ConfigError("initial sampler produced non-positive values")
        return x


@dataclass
class Trajectory:
    """Post-jump record of one path.

    ``values[n]`` is the state right after the jump at ``jump_times[n]``;
    ``x0`` is the state at time 0.  For the PDMP the path between jumps is
    ``e^(t - t_n) X_n`` and ``value_at`` applies that flow.
    """

    x0: float
    jump_times: np.ndarray
    values: np.ndarray
    t_end: float
    kind: str = "jump"
    exploded: bool = False
    explosion_time: Optional[float] = None
    exp_functional: Optional[float] = None
    exp_functional_err: Optional[float] = None
    draws: list = field(default_factory=list, repr=False)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def value_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        post = np.concatenate([[self.x0], self.values])
        start = np.concatenate([[0.0], self.jump_times])
        val = post[idx + 1]
        if self.kind == "pdmp":
            val = val * np.exp(t - start[idx + 1])
        if self.exploded:
            val = np.where(t >= self.explosion_time, 0.0, val)
        return val


def _single_draws(kernel: Kernel, seed, path_id, tag=streams.JUMPS) -> Iterator[tuple[float, float]]:
    st = streams.PathStreams(seed, tag, path_id, path_id + 1)
    n = 0
    while True:
        u = st.draw(n)[:, :1]
        yield float(-np.log(u[0])[0]), float(kernel.transform(u[1])[0])
        n += 1


def _draw_source(params, seed, path_id, draws):
    if draws is not None:
        return iter(draws)
    return _single_draws(params.kernel, seed, path_id)


def _x0(params, seed, path_id):
    return float(params.initial_values(seed, path_id, path_id + 1)[0])


def simulate_jump_process(
    params: ProcessParams,
    t_end: float,
    seed: int,
    path_id: int = 0,
    draws: Optional[Iterable[tuple[float, float]]] = None,
    check_time_change: bool = False,
) -> Trajectory:
    """One path of ``Y`` on ``[0, t_end]`` for ``alpha > 0``.

    ``draws`` replaces the random stream by explicit ``(epsilon, theta)``
    pairs.  With ``check_time_change`` the path is recomputed through the
    compound Poisson time change and a mismatch raises ``NumericError``.
    """
    if params.alpha <= 0:
        raise ConfigError("simulate_jump_process needs alpha > 0; use simulate_shattering")
    if not t_end > 0:
        raise ConfigError("t_end must be positive")
    alpha = params.alpha
    src = _draw_source(params, seed, path_id, draws)
    x0 = y = _x0(params, seed, path_id)
    tau = 0.0
    times, values, used = [], [], []
    for eps, theta in src:
        sigma = eps / y**alpha
        if tau + sigma > t_end:
            break
        tau += sigma
        y = theta * y
        times.append(tau)
        values.append(y)
        used.append((eps, theta))
    traj = Trajectory(x0, np.array(times), np.array(values), t_end, kind="jump", draws=used)
    if check_time_change:
        grid = np.concatenate([traj.jump_times, [t_end]])
        direct = traj.value_at(grid)
        changed = time_change_values(x0, alpha, used, grid)
        err = np.max(np.abs(direct - changed) / direct)
        if err > 1e-9:
            raise NumericError(f"time-change representation disagrees (rel err {err:.3g})")
    return traj


def time_change_values(x0, alpha, draws, times):
    """``Y(t) = Y_0 exp(-Z(rho(Y_0^alpha t)))`` for the compound Poisson
    process ``Z`` built from the same ``(epsilon, theta)`` draws."""
    eps = np.array([d[0] for d in draws])
    logs = -np.log(np.array([d[1] for d in draws]))
    z_after = np.concatenate([[0.0], np.cumsum(logs)])  # Z on [tau~_k, tau~_{k+1})
    # int_0^{tau~_k} e^{alpha Z(s)} ds, i.e. the clock Y_0^alpha tau_k
    clock = np.concatenate([[0.0], np.cumsum(eps * np.exp(alpha * z_after[:-1]))])
    target = x0**alpha * np.asarray(times, dtype=float)
    k = np.searchsorted(clock, target * (1 + 1e-13), side="right") - 1
    return x0 * np.exp(-z_after[k])


def simulate_pdmp(
    params: ProcessParams,
    t_end: float,
    seed: int,
    path_id: int = 0,
    draws: Optional[Iterable[tuple[float, float]]] = None,
) -> Trajectory:
    """One path of the growth-fragmentation process ``X`` on ``[0, t_end]``."""
    if params.alpha <= 0:
        raise ConfigError("simulate_pdmp needs alpha > 0")
    if not t_end > 0:
        raise ConfigError("t_end must be positive")
    alpha = params.alpha
    src = _draw_source(params, seed, path_id, draws)
    x0 = x = _x0(params, seed, path_id)
    t = 0.0
    times, values, used = [], [], []
    for eps, theta in src:
        xa = x**alpha
        dt = math.log1p(eps / xa) / alpha
        if t + dt > t_end:
            break
        t += dt
        x = theta * (eps + xa) ** (1.0 / alpha)
        times.append(t)
        values.append(x)
        used.append((eps, theta))
    return Trajectory(x0, np.array(times), np.array(values), t_end, kind="pdmp", draws=used)


def gamma_factor(t, alpha):
    """Zoom factor ``(1 + t)^(1/alpha)``."""
    return (1.0 + np.asarray(t, dtype=float)) ** (1.0 / alpha)


def coupling_discrepancy(y_traj: Trajectory, x_traj: Trajectory, alpha: float, n_grid: int = 2001):
    """Max over a time grid of ``|Y(t) - X(log gamma(t))/gamma(t)| / Y(t)``."""
    if y_traj.x0 != x_traj.x0:
        raise ConfigError("coupled paths must start from the same value")
    if y_traj.t_end == 0:
        return 0.0
    s_end = math.log(gamma_factor(y_traj.t_end, alpha))
    if not math.isclose(x_traj.t_end, s_end, rel_tol=1e-12):
        raise ConfigError("PDMP horizon does not match log gamma(t_end)")
    nj = min(y_traj.n_jumps, x_traj.n_jumps)
    if y_traj.draws[:nj] != x_traj.draws[:nj]:
        raise ConfigError("coupled paths were driven by different draws")
    t = np.linspace(0.0, y_traj.t_end, n_grid)
    g = gamma_factor(t, alpha)
    y = y_traj.value_at(t)
    x = x_traj.value_at(np.minimum(np.log(g), x_traj.t_end))
    return float(np.max(np.abs(y - x / g) / y))


def coupling_check(params: ProcessParams, t_end: float, seed: int, path_id: int = 0, draws=None, n_grid=2001):
    """Drive ``Y`` and ``X`` with the same draws and return the coupling
    discrepancy; roundoff-level for any parameters."""
    if params.alpha <= 0:
        raise ConfigError("coupling needs alpha > 0")
    if t_end == 0:
        return 0.0
    if draws is not None:
        draws = list(draws)
    y = simulate_jump_process(params, t_end, seed, path_id, draws=draws)
    s_end = math.log(gamma_factor(t_end, params.alpha))
    x = simulate_pdmp(params, s_end, seed, path_id, draws=draws)
    return coupling_discrepancy(y, x, params.alpha, n_grid)


def simulate_shattering(
    params: ProcessParams,
    seed: int,
    tail_tol: float = 1e-12,
    path_id: int = 0,
    draws: Optional[Iterable[tuple[float, float]]] = None,
    max_jumps: int = 1_000_000,
) -> Trajectory:
    """One path of ``Y`` for ``alpha < 0`` up to its explosion.

    Jumps are generated until the expected remaining explosion-time series,
    ``Y_n^|alpha| / (1 - E theta^|alpha|)`` in units of ``Y_0^|alpha|`` and
    multiplied by a safety factor of 10, drops below ``tail_tol``.
    """
    if params.alpha >= 0:
        raise ConfigError("simulate_shattering needs alpha < 0")
    if not tail_tol > 0:
        raise ConfigError("tail_tol must be positive")
    a = -params.alpha
    m = params.kernel.moment(a)
    src = _draw_source(params, seed, path_id, draws)
    x0 = y = _x0(params, seed, path_id)
    scale = x0**a
    tau = 0.0
    times, values, used = [], [], []
    for eps, theta in src:
        tau += eps * y**a
        y = theta * y
        times.append(tau)
        values.append(y)
        used.append((eps, theta))
        if TAIL_SAFETY * y**a / (1.0 - m) < tail_tol * scale:
            break
        if len(times) >= max_jumps:
            raise NumericError("explosion-time series did not reach tail_tol")
    i_inf = tau / scale
    return Trajectory(
        x0,
        np.array(times),
        np.array(values),
        t_end=math.inf,
        kind="jump",
        exploded=True,
        explosion_time=scale * i_inf,
        exp_functional=i_inf,
        exp_functional_err=y**a / (1.0 - m) / scale,
        draws=used,
    )


# ---------------------------------------------------------------- ensembles


def _obs(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ConfigError("observation times must be nonnegative")
    return times


def _jump_batch(params, times, seed, start, stop):
    alpha = params.alpha
    kern = params.kernel
    st = streams.PathStreams(seed, streams.JUMPS, start, stop)
    y = params.initial_values(seed, start, stop)
    tau = np.zeros_like(y)
    out = np.empty((y.size, times.size))
    t_max = times.max()
    idx = np.arange(y.size)
    n = 0
    while idx.size:
        u = st.draw(n)[:, idx]
        eps = -np.log(u[0])
        theta = kern.transform(u[1])
        ya = y[idx]
        nxt = tau[idx] + eps / ya**alpha
        for k, s in enumerate(times):
            hit = (tau[idx] <= s) & (s < nxt)
            out[idx[hit], k] = ya[hit]
        go = nxt <= t_max
        moved = idx[go]
        tau[moved] = nxt[go]
        y[moved] = theta[go] * ya[go]
        idx = moved
        n += 1
    return out


def jump_process_ensemble(params: ProcessParams, times, n_paths: int, seed: int, threads: int = 1):
    """``Y(t)`` at each observation time for paths ``0..n_paths-1``;
    shape ``(n_paths, len(times))``."""
    if params.alpha <= 0:
        raise ConfigError("jump_process_ensemble needs alpha > 0")
    times = _obs(times)
    return streams.map_batches(lambda s, e: _jump_batch(params, times, seed, s, e), n_paths, threads)


def _pdmp_batch(params, times, seed, start, stop):
    alpha = params.alpha
    kern = params.kernel
    st = streams.PathStreams(seed, streams.JUMPS, start, stop)
    x = params.initial_values(seed, start, stop)
    t = np.zeros_like(x)
    out = np.empty((x.size, times.size))
    t_max = times.max()
    idx = np.arange(x.size)
    n = 0
    while idx.size:
        u = st.draw(n)[:, idx]
        eps = -np.log(u[0])
        theta = kern.transform(u[1])
        xc = x[idx]
        tc = t[idx]
        xa = xc**alpha
        nxt = tc + np.log1p(eps / xa) / alpha
        for k, s in enumerate(times):
            hit = (tc <= s) & (s < nxt)
            out[idx[hit], k] = xc[hit] * np.exp(s - tc[hit])
        go = nxt <= t_max
        moved = idx[go]
        t[moved] = nxt[go]
        x[moved] = theta[go] * (eps[go] + xa[go]) ** (1.0 / alpha)
        idx = moved
        n += 1
    return out


def pdmp_ensemble(params: ProcessParams, times, n_paths: int, seed: int, threads: int = 1):
    """``X(t)`` at each observation time; shape ``(n_paths, len(times))``."""
    if params.alpha <= 0:
        raise ConfigError("pdmp_ensemble needs alpha > 0")
    times = _obs(times)
    return streams.map_batches(lambda s, e: _pdmp_batch(params, times, seed, s, e), n_paths, threads)


def _shatter_batch(params, times, seed, tail_tol, start, stop):
    a = -params.alpha
    kern = params.kernel
    m = kern.moment(a)
    st = streams.PathStreams(seed, streams.JUMPS, start, stop)
    x0 = params.initial_values(seed, start, stop)
    y = x0.copy()
    scale = x0**a
    tau = np.zeros_like(y)
    out = np.zeros((y.size, times.size))
    idx = np.arange(y.size)
    n = 0
    while idx.size:
        u = st.draw(n)[:, idx]
        eps = -np.log(u[0])
        theta = kern.transform(u[1])
        ya = y[idx]
        tc = tau[idx]
        nxt = tc + eps * ya**a
        for k, s in enumerate(times):
            hit = (tc <= s) & (s < nxt)
            out[idx[hit], k] = ya[hit]
        tau[idx] = nxt
        y[idx] = theta * ya
        done = TAIL_SAFETY * y[idx] ** a / (1.0 - m) < tail_tol * scale[idx]
        idx = idx[~done]
        n += 1
    # values at times beyond the last simulated jump are 0 (absorbed)
    i_inf = tau / scale
    return i_inf, scale * i_inf, out


def shattering_ensemble(
    params: ProcessParams, n_paths: int, seed: int, tail_tol: float = 1e-12, times=(0.0,), threads: int = 1
):
    """Explosion statistics for ``alpha < 0``.

    Returns ``(I_inf, explosion_time, values)`` where ``values[i, k]`` is
    ``Y(times[k])`` of path ``i`` (0 once the path has exploded).
    """
    if params.alpha >= 0:
        raise ConfigError("shattering_ensemble needs alpha < 0")
    if not tail_tol > 0:
        raise ConfigError("tail_tol must be positive")
    times = _obs(times)
    return streams.map_batches(
        lambda s, e: _shatter_batch(params, times, seed, tail_tol, s, e), n_paths, threads
    )


def log_jump_time_sums(kernel: Kernel, alpha: float, n_terms: int, n_paths: int, seed: int):
    """``log(Y_0^alpha tau_n)`` for ``n = 1..n_terms``, shape ``(n_paths, n_terms)``.

    ``Y_0^alpha tau_n = sum_{k<=n} eps_k prod_{j<k} theta_j^(-alpha)`` converges
    for ``alpha < 0`` and diverges for ``alpha > 0``.
    """
    st = streams.PathStreams(seed, streams.JUMPS, 0, n_paths)
    u = np.stack([st.draw(n) for n in range(n_terms)], axis=-1)
    log_eps = np.log(-np.log(u[0]))
    log_theta = np.log(kernel.transform(u[1]))
    prefix = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(log_theta, axis=1)[:, :-1]], axis=1)
    terms = log_eps - alpha * prefix
    return np.logaddexp.accumulate(terms, axis=1)
