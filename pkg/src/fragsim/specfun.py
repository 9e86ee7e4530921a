"""Special functions for the closed-form stationary profiles.

``hyper_u`` evaluates Tricomi's confluent hypergeometric function from its
Laplace-type integral only; every argument needed here has ``a, x > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, QuadratureError

# conditioning cap on shape parameters
PARAM_CAP = 1e3


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-4:
            raise ConfigError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol}")
        if self.max_subdivisions < 10:
            raise ConfigError("max_subdivisions must be >= 10")


DEFAULT_QUAD = QuadratureSpec()


def gamma_fn(x):
    """Gamma function on ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ConfigError("gamma_fn is defined here for x > 0 only")
    if xa.ndim == 0:
        return math.gamma(float(xa))
    return special.gamma(xa)


def _quad(f, a, b, q: QuadratureSpec, what: str, **kw):
    out = integrate.quad(f, a, b, epsrel=q.rel_tol, epsabs=0.0, limit=q.max_subdivisions, full_output=1, **kw)
    val, err = out[0], out[1]
    if not math.isfinite(val):
        raise QuadratureError(f"{what}: non-finite quadrature result", estimate=val)
    # a fourth element is QUADPACK's warning message; accept the result only
    # if the error estimate still meets the tolerance loosely
    if len(out) > 3 and err > 10 * q.rel_tol * abs(val):
        raise QuadratureError(f"{what}: quadrature did not converge (est {val:g} +- {err:g}): {out[3]}", estimate=val)
    return val


def hyper_u(a: float, b: float, x: float, q: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``U(a, b, x) = 1/Gamma(a) int_0^inf e^(-xs) s^(a-1) (1+s)^(b-a-1) ds``.

    The range is split in three: on (0, 1) the factor ``s^(a-1)`` is an
    algebraic quadrature weight (accurate for ``a`` near zero), up to
    ``max(2, 1/x)`` the integral runs in ``log s`` and beyond that in
    ``r = x s``, so both power-law and exponential decay are resolved for
    any ``x``.
    """
    if not (a > 0 and x > 0):
        raise ConfigError(f"hyper_u needs a, x > 0 (got a={a}, x={x})")
    if max(abs(a), abs(b)) > PARAM_CAP:
        raise ConfigError(f"hyper_u parameters are capped at {PARAM_CAP:g}")
    c = b - a - 1.0

    def smooth(s):
        return math.exp(-x * s + c * math.log1p(s))

    def full(s):
        return math.exp(-x * s + (a - 1.0) * math.log(s) + c * math.log1p(s))

    def full_log(v):
        return full(math.exp(v)) * math.exp(v)

    # for small x the integrand decays on the scale s ~ 1/x, which is
    # bridged in log s before the exponential tail
    knee = max(2.0, 1.0 / x)
    head = _quad(smooth, 0.0, 1.0, q, "hyper_u", weight="alg", wvar=(a - 1.0, 0.0))
    mid = _quad(full_log, 0.0, math.log(knee), q, "hyper_u")
    def tail(r):
        # s = r / x, so the exponential factor is e^-r
        s = r / x
        return math.exp(-r + (a - 1.0) * math.log(s) + c * math.log1p(s)) / x

    total = head + mid + _quad(tail, knee * x, np.inf, q, "hyper_u")
    return total * math.exp(-math.lgamma(a))


def beta_gamma_product_pdf(a1: float, a: float, a2: float, x, q: QuadratureSpec = DEFAULT_QUAD):
    """Density of ``theta * xi`` with ``theta ~ Beta(1+a1, a)`` and
    ``xi ~ Gamma(1+a2)`` independent:

    ``Gamma(1+a1+a) / (Gamma(1+a1) Gamma(1+a2)) e^(-x) x^a2 U(a, 1+a2-a1, x)``.
    """
    if not (a1 > 0 and a > 0 and a2 > 0):
        raise ConfigError("beta_gamma_product_pdf needs positive parameters")
    log_c = math.lgamma(1 + a1 + a) - math.lgamma(1 + a1) - math.lgamma(1 + a2)
    b = 1.0 + a2 - a1

    def one(xv):
        if not xv > 0:
            return 0.0
        u = hyper_u(a, b, xv, q)
        if u == 0.0:
            return 0.0
        return math.exp(log_c - xv + a2 * math.log(xv) + math.log(u))

    xa = np.asarray(x, dtype=float)
    if xa.ndim == 0:
        return one(float(xa))
    return np.array([one(v) for v in xa.ravel()]).reshape(xa.shape)


def scale_mixture_pdf(f_xi, f_theta, x: float, q: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Density at ``x`` of ``xi * theta`` for independent ``xi`` on (0, inf)
    and ``theta`` on (0, 1):  ``int_x^inf f_theta(x/r) f_xi(r) dr / r``.

    Integrated in ``w = log r`` from ``log x``, split at ``r = 1`` so that
    the bulk of ``f_xi`` is resolved whatever the size of ``x``.
    """
    if not x > 0:
        raise ConfigError("scale_mixture_pdf needs x > 0")
    lx = math.log(x)

    def f(w):
        s = math.exp(lx - w)
        if not 0 < s < 1:
            return 0.0
        return float(f_theta(s)) * float(f_xi(math.exp(w)))

    knee = max(lx, 0.0)
    head = _quad(f, lx, knee, q, "scale_mixture_pdf") if knee > lx else 0.0
    return head + _quad(f, knee, np.inf, q, "scale_mixture_pdf")
