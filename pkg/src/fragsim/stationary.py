"""Stationary objects of the growth-fragmentation process.

With ``m = E theta^alpha`` the perpetuities

    Z_inf      = sum_{k>=1} eps_k prod_{j<k}  theta_j^alpha
    X_inf^alpha = sum_{k>=1} eps_k prod_{j<=k} theta_j^alpha

converge almost surely.  ``X_inf`` is the stationary law of the post-jump
chain, ``Z_inf`` that of the pre-jump values ``X^alpha`` and the invariant
density of the PDMP is

    u*(x) = f_Z(x^alpha) / (E(-log theta) x^2),

finite exactly when ``E(-log theta) < inf``.  Closed forms exist for power
laws (generalized gamma) and two-component mixtures (beta times gamma);
other kernels get a Monte Carlo histogram.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import streams
from .errors import ConfigError, DivergenceWarning, NoStationaryProfileError, NumericError
from .grid import LogGrid
from .kernel import Kernel, Mixture, PowerLaw, make_kernel
from .specfun import DEFAULT_QUAD, QuadratureSpec, beta_gamma_product_pdf

TAIL_SAFETY = 10.0
MAX_TERMS = 100_000
# below this beta-factor parameter the mixture profile is treated as a pure power law
DEGENERATE_A = 1e-12
HIST_BINS = 512
HIST_SAMPLES = 10**6
HIST_TRIM = 1e-4


def _check_alpha(alpha):
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ConfigError(f"alpha must be positive, got {alpha}")


# ------------------------------------------------------------- perpetuities


def _perpetuity_batch(kernel, alpha, seed, tag, start, stop, tail_tol, depth_factor, shift):
    """Sum ``eps_k P_{k+shift}`` with ``P_k = prod_{j<k} theta_j^alpha``.

    A path stops once ``10 P_{n+1} / (1 - m)``, ten times the expected
    remainder, drops below ``tail_tol``; with ``depth_factor > 1`` it keeps
    going to ``depth_factor`` times that many terms.
    """
    m = kernel.moment(alpha)
    if not m < 1:
        raise NumericError("E theta^alpha must be < 1")
    st = streams.PathStreams(seed, tag, start, stop)
    size = stop - start
    total = np.zeros(size)
    prod = np.ones(size)
    n_stop = np.zeros(size, dtype=np.int64)
    idx = np.arange(size)
    n = 0
    while idx.size:
        u = st.draw(n)[:, idx]
        eps = -np.log(u[0])
        ta = kernel.transform(u[1]) ** alpha
        if shift:
            prod[idx] *= ta
            total[idx] += eps * prod[idx]
        else:
            total[idx] += eps * prod[idx]
            prod[idx] *= ta
        n += 1
        fresh = (n_stop[idx] == 0) & (TAIL_SAFETY * prod[idx] / (1.0 - m) < tail_tol)
        n_stop[idx[fresh]] = n
        finished = (n_stop[idx] > 0) & (n >= depth_factor * n_stop[idx])
        idx = idx[~finished]
        if n > MAX_TERMS:
            raise NumericError("perpetuity did not reach tail_tol")
    return total


def perpetuity_path(draws, alpha, m, tail_tol=1e-12, shift=0, max_terms=MAX_TERMS):
    """Scalar version of the perpetuity sums for one explicit sequence of
    ``(eps, theta)`` pairs; ``m = E theta^alpha`` sets the stopping rule."""
    if not 0 <= m < 1:
        raise ConfigError("m must lie in [0, 1)")
    total, prod = 0.0, 1.0
    for n, (eps, theta) in enumerate(draws, start=1):
        if shift:
            prod *= theta**alpha
            total += eps * prod
        else:
            total += eps * prod
            prod *= theta**alpha
        if TAIL_SAFETY * prod / (1.0 - m) < tail_tol:
            return total
        if n >= max_terms:
            break
    raise NumericError("perpetuity did not reach tail_tol")


def _perpetuity(kernel, alpha, n, seed, tag, tail_tol, depth_factor, shift, threads):
    _check_alpha(alpha)
    kernel = make_kernel(kernel)
    if not tail_tol > 0:
        raise ConfigError("tail_tol must be positive")
    if int(n) < 1:
        raise ConfigError("need at least one sample")
    if depth_factor < 1:
        raise ConfigError("depth_factor must be >= 1")
    return streams.map_batches(
        lambda s, e: _perpetuity_batch(kernel, alpha, seed, tag, s, e, tail_tol, depth_factor, shift),
        int(n),
        threads,
    )


def sample_Zinf(kernel, alpha, n, seed, tail_tol=1e-12, depth_factor=1, threads=1, tag=streams.ZINF):
    """``n`` draws of ``Z_inf``, path-indexed by ``(seed, tag)``."""
    return _perpetuity(kernel, alpha, n, seed, tag, tail_tol, depth_factor, 0, threads)


def sample_Xinf_alpha(kernel, alpha, n, seed, tail_tol=1e-12, depth_factor=1, threads=1, tag=streams.XINF):
    """``n`` draws of ``X_inf^alpha``."""
    return _perpetuity(kernel, alpha, n, seed, tag, tail_tol, depth_factor, 1, threads)


def sample_Xinf(kernel, alpha, n, seed, tail_tol=1e-12, depth_factor=1, threads=1, tag=streams.XINF):
    """``n`` draws of the stationary post-jump value ``X_inf``."""
    return sample_Xinf_alpha(kernel, alpha, n, seed, tail_tol, depth_factor, threads, tag) ** (1.0 / alpha)


def _step_uniforms(seed, n):
    st = streams.PathStreams(seed, streams.ONE_STEP, 0, n)
    return st.draw(0)


def fixed_point_distance(kernel, alpha, n_samples, seed, same_inputs=False, tail_tol=1e-12, threads=1):
    """Two-sample KS statistic between ``X_inf`` draws and the image of
    ``X_inf`` draws under one chain step ``x -> theta (eps + x^alpha)^(1/alpha)``.

    The inputs to the step come from an independent stream unless
    ``same_inputs``, in which case they are the very draws of the first sample.
    """
    from .stats import ks_two_sample

    kernel = make_kernel(kernel)
    if int(n_samples) < 1000:
        raise ConfigError("fixed_point_distance needs n_samples >= 1000")
    a = sample_Xinf(kernel, alpha, n_samples, seed, tail_tol, threads=threads)
    tag = streams.XINF if same_inputs else streams.XINF_FRESH
    xa = sample_Xinf_alpha(kernel, alpha, n_samples, seed, tail_tol, threads=threads, tag=tag)
    u = _step_uniforms(seed, int(n_samples))
    b = kernel.transform(u[1]) * (-np.log(u[0]) + xa) ** (1.0 / alpha)
    return ks_two_sample(a, b)


def moment_Zinf(kernel, alpha, n: int) -> float:
    """``E Z_inf^n = n! / prod_{k=1}^n phi(alpha k)``."""
    _check_alpha(alpha)
    kernel = make_kernel(kernel)
    n = int(n)
    if n < 1:
        raise ConfigError("moment order must be a positive integer")
    out = 1.0
    for k in range(1, n + 1):
        out *= k / kernel.laplace_exponent(alpha * k)
    return out


@dataclass
class FirstJumpEstimate:
    mean: float
    stderr: float
    n: int
    target: float
    diverging: bool
    checkpoints: np.ndarray = field(repr=False)
    running_means: np.ndarray = field(repr=False)

    @property
    def z_score(self) -> float:
        if not math.isfinite(self.target) or self.stderr == 0:
            return math.inf
        return (self.mean - self.target) / self.stderr


def first_jump_times(kernel, alpha, n, seed, tail_tol=1e-12, threads=1):
    """``t_1 = log(1 + eps / X_0^alpha) / alpha`` with ``X_0 ~ X_inf``."""
    kernel = make_kernel(kernel)
    xa = sample_Xinf_alpha(kernel, alpha, n, seed, tail_tol, threads=threads)
    eps = -np.log(streams.PathStreams(seed, streams.FIRST_JUMP, 0, int(n), width=1).draw(0)[0])
    return np.log1p(eps / xa) / alpha


def mean_first_jump_time_stationary(kernel, alpha, n_samples, seed, tail_tol=1e-12, threads=1) -> FirstJumpEstimate:
    """Monte Carlo mean of the first jump time from the stationary law,
    to be compared with ``E(-log theta)``.

    When ``E(-log theta)`` is infinite there is no stationary law to speak
    of; the estimate is still returned, flagged as diverging, together with
    the running means at decades of the sample size.
    """
    kernel = make_kernel(kernel)
    target = kernel.mean_log()
    t1 = first_jump_times(kernel, alpha, n_samples, seed, tail_tol, threads)
    n = t1.size
    checkpoints = np.unique(np.concatenate([10 ** np.arange(2, int(math.log10(n)) + 1), [n]]))
    checkpoints = checkpoints[checkpoints <= n]
    cums = np.cumsum(t1)
    running = cums[checkpoints - 1] / checkpoints
    diverging = not math.isfinite(target)
    if diverging:
        warnings.warn(
            f"E(-log theta) is infinite; running means {running[-3:]} do not settle",
            DivergenceWarning,
            stacklevel=2,
        )
    return FirstJumpEstimate(
        mean=float(t1.mean()),
        stderr=float(t1.std(ddof=1) / math.sqrt(n)),
        n=n,
        target=target,
        diverging=diverging,
        checkpoints=checkpoints,
        running_means=running,
    )


# ------------------------------------------------------------------ profiles


class StationaryProfile:
    """Invariant density ``u*`` of the rescaled equation.

    ``form`` is ``"gen_gamma"``, ``"beta_gamma"`` or ``"histogram"``.  Besides
    pointwise evaluation it provides the mass distribution function
    ``M(x) = int_0^x u*(y) y dy`` and the masses it puts on grid cells.
    """

    form = ""

    def __init__(self, alpha: float, kernel: Kernel, normalizer: float):
        self.alpha = float(alpha)
        self.kernel = kernel
        self.normalizer = float(normalizer)

    def f_Z(self, z):
        raise NotImplementedError

    def u_star(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, self.f_Z(x**self.alpha) / (self.normalizer * x * x), 0.0)

    def mass_density(self, x):
        """``u*(x) x``, the density of the stationary law of the PDMP."""
        return self.u_star(x) * np.asarray(x, dtype=float)

    def mass_cdf(self, x):
        raise NotImplementedError

    def cell_masses(self, grid: LogGrid):
        """``(masses, below, above)``: mass per cell and outside the grid."""
        cdf = np.asarray(self.mass_cdf(grid.edges), dtype=float)
        total = float(self.mass_cdf(np.inf))
        return np.diff(cdf), float(cdf[0]), max(0.0, float(total - cdf[-1]))

    def mass(self) -> float:
        """``int_0^inf u*(x) x dx`` by quadrature in ``log x``."""

        def f(y):
            x = math.exp(y)
            return float(self.mass_density(x)) * x

        lo, hi = self._log_support()
        val = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-11, limit=400)[0]
        return val

    def _log_support(self):
        return -50.0, 10.0

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"form": self.form, "alpha": self.alpha, "normalizer": self.normalizer, **self.params()}

    def table(self, x):
        """Rows ``(x, u*, u* x)`` for CSV export."""
        x = np.asarray(x, dtype=float)
        u = self.u_star(x)
        return np.column_stack([x, u, u * x])


class GenGammaProfile(StationaryProfile):
    """Power-law kernel ``g = beta z^(beta-1)``:
    ``u*(x) = alpha / Gamma(beta/alpha) x^(beta-2) e^(-x^alpha)`` and
    ``Z_inf ~ Gamma(1 + beta/alpha)``."""

    form = "gen_gamma"

    def __init__(self, alpha, kernel, beta):
        super().__init__(alpha, kernel, 1.0 / beta)
        self.beta = float(beta)
        self.shape = self.beta / self.alpha

    def f_Z(self, z):
        z = np.asarray(z, dtype=float)
        k = self.shape + 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logf = (k - 1.0) * np.log(z) - z - math.lgamma(k)
            return np.where(z > 0, np.exp(logf), 0.0)

    def u_star(self, x):
        x = np.asarray(x, dtype=float)
        c = math.log(self.alpha) - math.lgamma(self.shape)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logu = c + (self.beta - 2.0) * np.log(x) - x**self.alpha
            return np.where(x > 0, np.exp(logu), 0.0)

    def mass_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammainc(self.shape, np.maximum(x, 0.0) ** self.alpha)

    def cell_masses(self, grid: LogGrid):
        # differences of the upper incomplete gamma function above the mode
        # avoid cancellation in the far tail
        s = grid.edges**self.alpha
        lower = special.gammainc(self.shape, s)
        upper = special.gammaincc(self.shape, s)
        m = np.where(s[1:] < self.shape, np.diff(lower), -np.diff(upper))
        return m, float(lower[0]), float(upper[-1])

    def _log_support(self):
        # mass below e^lo is about e^(beta lo) < 1e-17; above, e^(-x^alpha) underflows
        return max(-40.0 / self.beta, -300.0), math.log(800.0) / self.alpha

    def params(self):
        return {"beta": self.beta}


class BetaGammaProfile(StationaryProfile):
    """Mixture kernel (canonical order ``beta2 > beta1``, ``p`` the weight of
    ``beta1``): ``Z_inf`` is ``B xi`` with ``B ~ Beta(1 + a1, a)`` and
    ``xi ~ Gamma(1 + a2)``, ``a_i = beta_i/alpha``, ``a = p (a2 - a1)``."""

    form = "beta_gamma"

    def __init__(self, alpha, kernel, normalizer, a1, a, a2, quad: QuadratureSpec = DEFAULT_QUAD):
        super().__init__(alpha, kernel, normalizer)
        self.a1, self.a, self.a2 = float(a1), float(a), float(a2)
        self.quad = quad

    def f_Z(self, z):
        z = np.asarray(z, dtype=float)
        return beta_gamma_product_pdf(self.a1, self.a, self.a2, z, self.quad)

    def _mass_cdf_one(self, x):
        if not x > 0:
            return 0.0
        if math.isinf(x):
            return self.mass_limit()
        s_alpha = x**self.alpha
        a1, a, a2 = self.a1, self.a, self.a2

        def f(s):
            return special.gammainc(a2, s_alpha / s) if s > 0 else 1.0

        # E[1/Z; Z < x^alpha] with the Beta weight s^a1 (1-s)^(a-1) / s
        val = integrate.quad(
            f, 0.0, 1.0, weight="alg", wvar=(a1 - 1.0, a - 1.0), epsrel=self.quad.rel_tol, limit=200
        )[0]
        log_norm = special.betaln(1.0 + a1, a)
        return val * math.exp(-log_norm) / (self.alpha * self.normalizer * a2)

    def mass_cdf(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return self._mass_cdf_one(float(x))
        return np.array([self._mass_cdf_one(v) for v in x.ravel()]).reshape(x.shape)

    def mass_limit(self) -> float:
        """``M(inf) = B(a1, a) / (B(1 + a1, a) alpha E a2)``, one whenever ``E``
        is the kernel's ``E(-log theta)``."""
        log_ratio = special.betaln(self.a1, self.a) - special.betaln(1.0 + self.a1, self.a)
        return math.exp(log_ratio) / (self.alpha * self.normalizer * self.a2)

    def _log_support(self):
        return max(-40.0 / (self.alpha * self.a1), -300.0), math.log(800.0) / self.alpha

    def params(self):
        return {"a1": self.a1, "a": self.a, "a2": self.a2}


class HistogramProfile(StationaryProfile):
    """Monte Carlo profile on a log grid.

    Stationarity makes the long-run time average of the PDMP equal to
    ``u*(x) x dx``.  Over one inter-jump period the path climbs at unit
    speed in ``log x`` from a post-jump value ``X ~ X_inf`` to the pre-jump
    value ``(X^alpha + eps)^(1/alpha)``; each sampled period therefore
    deposits mass uniformly in ``log x`` over that interval, and the
    deposits are normalized to total one.
    """

    form = "histogram"

    def __init__(self, alpha, kernel, normalizer, grid: LogGrid, masses, below, above, n_samples):
        super().__init__(alpha, kernel, normalizer)
        self.grid = grid
        self.masses = np.asarray(masses, dtype=float)
        self.below, self.above = float(below), float(above)
        self.n_samples = int(n_samples)
        e = grid.edges
        self._cum = np.concatenate([[self.below], self.below + np.cumsum(self.masses)])
        self._log_edges = np.log(e)

    def mass_density(self, x):
        x = np.asarray(x, dtype=float)
        i = self.grid.locate(x)
        inside = (i >= 0) & (i < self.grid.n_cells)
        widths = np.diff(self.grid.edges)
        ic = np.clip(i, 0, self.grid.n_cells - 1)
        return np.where(inside, self.masses[ic] / widths[ic], 0.0)

    def u_star(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, self.mass_density(x) / x, 0.0)

    def f_Z(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(z > 0, z, 1.0) ** (1.0 / self.alpha)
        return np.where(z > 0, self.normalizer * x * x * self.u_star(x), 0.0)

    def mass_cdf(self, x):
        """Linear in ``log x`` inside each cell."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            y = np.log(np.maximum(x, 0.0))
        out = np.interp(y, self._log_edges, self._cum)
        out = np.where(y < self._log_edges[0], 0.0, out)
        return np.where(y > self._log_edges[-1], 1.0, out)

    def cell_masses(self, grid: LogGrid):
        if grid == self.grid:
            return self.masses.copy(), self.below, self.above
        return super().cell_masses(grid)

    def mass(self):
        return float(self.below + self.masses.sum() + self.above)

    def params(self):
        return {"grid": self.grid.to_spec(), "n_samples": self.n_samples, "below": self.below, "above": self.above}


def _log_uniform_deposit(lo, hi, edges):
    """Total length of ``[lo_j, hi_j] cap (-inf, e]`` summed over samples,
    evaluated at each ``e`` in ``edges`` (all in log coordinates)."""

    def ramp(c):
        c = np.sort(c)
        csum = np.concatenate([[0.0], np.cumsum(c)])
        k = np.searchsorted(c, edges, side="left")
        return k * edges - csum[k]

    return ramp(lo) - ramp(hi)


def histogram_profile(kernel, alpha, n_samples=HIST_SAMPLES, seed=0, n_bins=HIST_BINS, trim=HIST_TRIM, threads=1):
    """Histogram-backed profile for kernels without a closed form."""
    kernel = make_kernel(kernel)
    xa = sample_Xinf_alpha(kernel, alpha, n_samples, seed, threads=threads)
    eps = -np.log(streams.PathStreams(seed, streams.FIRST_JUMP, 0, int(n_samples), width=1).draw(0)[0])
    lo = np.log(xa) / alpha
    hi = np.log(xa + eps) / alpha
    # central range of the sampled periods
    y_min = float(np.quantile(lo, trim / 2))
    y_max = float(np.quantile(hi, 1 - trim / 2))
    grid = LogGrid(math.exp(y_min), math.exp(y_max), n_bins)
    le = np.log(grid.edges)
    le[0], le[-1] = y_min, y_max
    cum = _log_uniform_deposit(lo, hi, le)
    total = float(np.sum(hi - lo))
    masses = np.diff(cum) / total
    below = cum[0] / total
    above = max(0.0, 1.0 - below - masses.sum())
    return HistogramProfile(alpha, kernel, kernel.mean_log(), grid, masses, below, above, n_samples)


def canonical_mixture(kernel: Mixture) -> tuple[float, float, float]:
    """``(p, beta1, beta2)`` with ``beta1 <= beta2`` and ``p`` the weight of ``beta1``."""
    if kernel.beta1 <= kernel.beta2:
        return kernel.p, kernel.beta1, kernel.beta2
    return 1.0 - kernel.p, kernel.beta2, kernel.beta1


def stationary_profile(kernel, alpha, n_samples=HIST_SAMPLES, seed=0, quad: QuadratureSpec = DEFAULT_QUAD, threads=1):
    """Stationary profile of the rescaled equation.

    Raises ``NoStationaryProfileError`` when ``E(-log theta)`` is infinite:
    then no integrable stationary profile exists and the rescaled
    solutions sweep to zero instead.
    """
    _check_alpha(alpha)
    kernel = make_kernel(kernel)
    e_log = kernel.mean_log()
    if not math.isfinite(e_log):
        raise NoStationaryProfileError(
            "E(-log theta) is infinite: there is no integrable stationary profile "
            "(mass is swept toward zero under the self-similar zoom)"
        )
    if isinstance(kernel, PowerLaw):
        return GenGammaProfile(alpha, kernel, kernel.beta)
    if isinstance(kernel, Mixture):
        p, b1, b2 = canonical_mixture(kernel)
        a1, a2 = b1 / alpha, b2 / alpha
        a = p * (a2 - a1)
        if a < DEGENERATE_A:
            return GenGammaProfile(alpha, kernel, b2)
        if 1.0 - p < DEGENERATE_A:
            # all weight on beta1; Beta(1+a1, a2-a1) Gamma(1+a2) is Gamma(1+a1)
            return GenGammaProfile(alpha, kernel, b1)
        return BetaGammaProfile(alpha, kernel, e_log, a1, a, a2, quad)
    return histogram_profile(kernel, alpha, n_samples, seed, threads=threads)


def self_similar_density(prof: StationaryProfile, t, x):
    """Self-similar solution of the fragmentation equation in two forms:
    ``f_Z((1+t) x^alpha) / (E x^2)`` and ``gamma^2 u*(gamma x)`` with
    ``gamma = (1+t)^(1/alpha)``.  Returns both."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t < 0):
        raise ConfigError("t must be nonnegative")
    if np.any(~(x > 0)):
        raise ConfigError("x must be positive")
    a = prof.alpha
    direct = prof.f_Z((1.0 + t) * x**a) / (prof.normalizer * x * x)
    g = (1.0 + t) ** (1.0 / a)
    zoomed = g * g * prof.u_star(g * x)
    return direct, zoomed


def self_similar_mass(prof: StationaryProfile, t: float, rel_tol: float = 1e-11) -> float:
    """``int_0^inf c*(t, x) x dx`` by quadrature of the first form."""
    lo, hi = prof._log_support()
    shift = math.log1p(t) / prof.alpha

    def f(y):
        x = math.exp(y)
        return float(self_similar_density(prof, t, x)[0]) * x * x

    return integrate.quad(f, lo - shift, hi - shift, epsabs=0.0, epsrel=rel_tol, limit=400)[0]
