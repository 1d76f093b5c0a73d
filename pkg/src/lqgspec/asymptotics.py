"""Deterministic checks of the Tauberian and asymptotic-differentiation transforms.

Both checks run on explicit regularly varying inputs where every quantity is
a one-dimensional integral, evaluated with adaptive quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, PreconditionError, QuadratureError

QUAD_EPSREL = 1e-11


@dataclass
class TransformReport:
    """Curves ``lhs``, ``rhs`` on ``grid`` and their worst relative mismatch.

    ``extra`` carries check-specific curves (for example the sandwich
    envelope of :func:`asympdiff_check`).
    """

    rho: float
    grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_rel_dev: float
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        return self.lhs / self.rhs


def _quad(fn, lo, hi, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge: {exc}") from exc
    if not math.isfinite(val):
        raise QuadratureError(f"quadrature on [{lo}, {hi}] returned {val}")
    return val


def _strict_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0):
        raise PreconditionError("grid must be a non-empty 1D array of positive values")
    if g.size > 1 and not (np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)):
        raise PreconditionError("grid must be strictly monotone")
    return g


# slowly varying factors L(s) on (0, 1); the measure vanishes on s >= 1 when L is not constant
SLOWLY_VARYING: dict[str, Callable[[float], float]] = {
    "power": lambda s: 1.0,
    "log": lambda s: -math.log(s),
}


def _laplace(rho: float, L, lam: float, bounded: bool) -> float:
    # nu_hat(lam) = int s^(rho-1) L(s) e^(-lam s) ds, with s = x/lam
    upper = min(lam, 800.0) if bounded else 800.0
    g = lambda x: x ** (rho - 1.0) * L(x / lam) * math.exp(-x)
    mid = min(1.0, upper)
    val = _quad(g, 0.0, mid) + (_quad(g, mid, upper) if upper > mid else 0.0)
    return lam ** (-rho) * val


def _mass_below(rho: float, L, t: float) -> float:
    # nu([0, t]) with s = t y
    return t**rho * _quad(lambda y: y ** (rho - 1.0) * L(t * y), 0.0, 1.0)


def tauberian_check(rho: float, density="power", grid=(1e2, 1e3, 1e4, 1e5, 1e6)) -> TransformReport:
    """Compare ``lam^rho nu_hat(lam)`` with ``Gamma(1+rho) t^-rho nu([0,t])`` at ``t = 1/lam``.

    ``nu(ds) = s^(rho-1) L(s) ds``; ``density="power"`` takes ``L = 1`` on
    ``(0, inf)`` and ``density="log"`` takes ``L(s) = log(1/s)`` on ``(0, 1)``.
    A callable ``L`` is treated like ``"log"`` (supported on ``(0, 1)``).

    >>> r = tauberian_check(1.0, grid=[10.0])
    >>> abs(float(r.ratio[0]) - 1.0) < 1e-9
    True
    """
    rho = float(rho)
    if not 0.0 <= rho <= 4.0:
        raise DomainError(f"rho must lie in [0, 4], got {rho}")
    if rho == 0.0:
        raise PreconditionError("s^-1 L(s) ds is not integrable at 0 for rho = 0")
    if callable(density):
        L, bounded = density, True
    elif density in SLOWLY_VARYING:
        L, bounded = SLOWLY_VARYING[density], density != "power"
    else:
        raise DomainError(f"unknown density tag {density!r}")
    lam = _strict_grid(grid)
    lhs = np.array([l**rho * _laplace(rho, L, l, bounded) for l in lam])
    rhs = np.array([special.gamma(1.0 + rho) * l**rho * _mass_below(rho, L, 1.0 / l) for l in lam])
    dev = np.abs(lhs / rhs - 1.0)
    if not np.all(np.isfinite(dev)):
        raise QuadratureError("non-finite transform values")
    return TransformReport(rho, lam, lhs, rhs, float(dev.max()))


def tauberian_log_ratio(rho: float, lam):
    """Closed form of the ``density="log"`` ratio: ``(log lam - digamma(rho)) / (log lam + 1/rho)``."""
    lam = np.asarray(lam, dtype=np.float64)
    return (np.log(lam) - special.digamma(rho)) / (np.log(lam) + 1.0 / rho)


def _phi_family(tag, alpha: float, beta: float):
    base = lambda u: beta * u ** (beta - alpha)
    if callable(tag):
        return tag
    if tag == "power":
        return base
    if tag == "wobble":
        # bounded but non-vanishing oscillation
        return lambda u: base(u) * (1.0 + 0.1 * math.sin(math.log(u)))
    if tag == "decaying_wobble":
        # oscillation of relative size sqrt(u), vanishing as u -> 0
        return lambda u: base(u) * (1.0 + 0.1 * math.sqrt(u) * math.sin(math.log(u)))
    raise DomainError(f"unknown phi tag {tag!r}")


def asympdiff_check(alpha: float, beta: float, phi="power", t_grid=None, b: float = 1.1) -> TransformReport:
    """Check ``t^(alpha-beta) phi(t) -> beta`` given ``t^-beta int_0^t u^(alpha-1) phi(u) du -> 1``.

    ``lhs`` is ``t^(alpha-beta) phi(t)`` and ``rhs`` the constant ``beta``.
    Monotonicity of ``phi`` gives, for any ``b > 1``, the sandwich

    ``alpha/(b^alpha - 1) t^-beta int_t^{bt} <= t^(alpha-beta) phi(t) <= alpha/(1 - b^-alpha) t^-beta int_{t/b}^t``

    (integrand ``u^(alpha-1) phi``), reported as ``extra["lower"]`` and
    ``extra["upper"]``.  ``extra["normalized"]`` is ``t^-beta int_0^t``.

    ``phi`` is ``"power"`` (``beta u^(beta-alpha)``), ``"wobble"`` (times
    ``1 + 0.1 sin log u``), ``"decaying_wobble"`` (times
    ``1 + 0.1 sqrt(u) sin log u``) or a callable.
    """
    if alpha <= 0 or beta <= 0:
        raise DomainError("alpha and beta must be positive")
    if b <= 1:
        raise DomainError("sandwich ratio b must exceed 1")
    if t_grid is None:
        t_grid = np.logspace(-1, -8, 15)
    t = _strict_grid(t_grid)
    fn = _phi_family(phi, alpha, beta)
    vals = np.array([fn(x) for x in t])
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise PreconditionError("phi must be positive on the grid")
    order = np.argsort(t)
    if np.any(np.diff(vals[order]) > 1e-15 * np.abs(vals[order][1:])):
        raise PreconditionError("phi is not non-increasing on the grid")

    g = lambda u: u ** (alpha - 1.0) * fn(u)

    def integral(lo, hi):
        # log variable keeps oscillations in log u well resolved
        return _quad(lambda s: math.exp(s) * g(math.exp(s)), math.log(lo), math.log(hi))

    def from_zero(x):
        # u = x e^-s; the integrand decays like e^(-beta s), cut where it is below 1e-17
        s_max = 40.0 / beta
        return _quad(lambda s: x**alpha * math.exp(-alpha * s) * fn(x * math.exp(-s)), 0.0, s_max)

    lhs = t ** (alpha - beta) * vals
    upper = np.array([alpha / (1.0 - b**-alpha) * x**-beta * integral(x / b, x) for x in t])
    lower = np.array([alpha / (b**alpha - 1.0) * x**-beta * integral(x, b * x) for x in t])
    normalized = np.array([x**-beta * from_zero(x) for x in t])
    rhs = np.full_like(lhs, beta)
    dev = np.abs(lhs / rhs - 1.0)
    return TransformReport(
        0.0, t, lhs, rhs, float(dev.max()),
        {"lower": lower, "upper": upper, "normalized": normalized, "b": b,
         "width": upper - lower},
    )
