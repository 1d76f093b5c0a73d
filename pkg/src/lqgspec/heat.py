"""Heat trace, diagonal heat kernel and the resolvent functional J from a truncated spectrum.

Only the lowest ``k`` eigenpairs are known, so every small-``t`` (large
``lambda``) quantity carries a tail estimate built from the Weyl slope of the
computed spectrum.  Values whose tail is not small are flagged, and pointwise
kernel evaluation refuses them outright.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError, ResolutionError
from .spectral import Spectrum

HEAT_GATE = 0.01
KERNEL_GATE = 0.05


def _values(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    return np.sort(np.asarray(spectrum, dtype=np.float64))


def tail_slope(spectrum) -> float:
    """Counting-function slope used for tail bounds.

    Least squares through the origin over the upper half of the computed
    spectrum, so it tracks the density where the truncation happens.
    """
    vals = _values(spectrum)
    k = vals.size
    lo = k // 2
    j = np.arange(lo + 1, k + 1, dtype=np.float64)
    lam = vals[lo:]
    return float(j @ lam / (lam @ lam))


def heat_tail_bound(spectrum, t, slope=None):
    """``(slope / t) exp(-lambda_k t)``: the omitted tail for a linear counting function."""
    vals = _values(spectrum)
    slope = tail_slope(vals) if slope is None else slope
    t = np.asarray(t, dtype=np.float64)
    return slope / t * np.exp(-vals[-1] * t)


@dataclass
class HeatTraceCurve:
    t: np.ndarray
    S: np.ndarray
    tail_bound: np.ndarray
    gate: float = HEAT_GATE

    @property
    def tS(self) -> np.ndarray:
        return self.t * self.S

    @property
    def resolved(self) -> np.ndarray:
        return self.tail_bound <= self.gate * self.S


def heat_trace(spectrum, t_grid, slope=None, gate: float = HEAT_GATE) -> HeatTraceCurve:
    """``S(t) = sum_{n<=k} exp(-lambda_n t)`` on ``t_grid``.

    >>> c = heat_trace([1.0, 2.0, 3.0], [1.0])
    >>> round(float(c.S[0]), 7)
    0.5530018
    """
    vals = _values(spectrum)
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if np.any(t <= 0):
        raise DomainError("heat trace needs t > 0")
    # sum smallest terms first
    S = np.exp(-np.outer(t, vals[::-1])).sum(axis=1)
    return HeatTraceCurve(t, S, heat_tail_bound(vals, t, slope), gate)


def laplace_of_weighted_trace(spectrum, lam: float) -> float:
    """``sum_n (lam + lambda_n)^-2``, the Laplace transform of ``u S(u)`` at ``lam``.

    >>> laplace_of_weighted_trace([1.0], 1.0)
    0.25
    """
    if lam <= 0:
        raise DomainError("lambda must be positive")
    vals = _values(spectrum)
    return float(np.sum(1.0 / (lam + vals[::-1]) ** 2))


def laplace_tail_bound(spectrum, lam: float, slope=None) -> float:
    """Omitted tail ``int_{lambda_k}^inf slope dx / (lam + x)^2 = slope / (lam + lambda_k)``."""
    vals = _values(spectrum)
    slope = tail_slope(vals) if slope is None else slope
    return float(slope / (lam + vals[-1]))


def _node_index(spectrum: Spectrum, x) -> int:
    if np.ndim(x) == 0:
        return int(x)
    i, j = x
    return int(i) * spectrum.n + int(j)


def _require_vectors(spectrum):
    if not isinstance(spectrum, Spectrum) or spectrum.eigenvectors is None:
        raise PreconditionError("this quantity needs a spectrum with eigenvectors")


def check_resolved(spectrum, t: float, gate: float = KERNEL_GATE, slope=None) -> None:
    curve = heat_trace(spectrum, [t], slope=slope, gate=gate)
    if not curve.resolved[0]:
        raise ResolutionError(
            f"t={t:.4g} is below the resolved range: tail bound "
            f"{curve.tail_bound[0]:.3g} > {gate:g} * S(t) = {gate * curve.S[0]:.3g}"
        )


def diagonal_kernel(spectrum: Spectrum, x, t: float, gate: float = KERNEL_GATE, slope=None) -> float:
    """``p_t(x, x) = sum_n exp(-lambda_n t) f_n(x)^2``; refuses unresolved ``t``."""
    _require_vectors(spectrum)
    if t <= 0:
        raise DomainError("t must be positive")
    check_resolved(spectrum, t, gate, slope)
    f = spectrum.eigenvectors[:, _node_index(spectrum, x)]
    return float(np.sum(np.exp(-spectrum.eigenvalues * t) * f * f))


def diagonal_kernel_map(spectrum: Spectrum, t: float, gate: float = KERNEL_GATE, slope=None) -> np.ndarray:
    """:func:`diagonal_kernel` at every node, shape ``(n, n)``."""
    _require_vectors(spectrum)
    if t <= 0:
        raise DomainError("t must be positive")
    check_resolved(spectrum, t, gate, slope)
    w = np.exp(-spectrum.eigenvalues * t)
    return (w @ spectrum.eigenvectors**2).reshape(spectrum.n, spectrum.n)


def j_lambda(spectrum: Spectrum, x, lam: float) -> float:
    """``J(x) = lam * sum_n f_n(x)^2 / (lam + lambda_n)^2``."""
    _require_vectors(spectrum)
    if lam <= 0:
        raise DomainError("lambda must be positive")
    f = spectrum.eigenvectors[:, _node_index(spectrum, x)]
    return float(lam * np.sum(f * f / (lam + spectrum.eigenvalues) ** 2))


@dataclass
class JLambdaMap:
    lam: float
    values: np.ndarray
    tail_fraction: float
    truncated: bool


def j_lambda_map(spectrum: Spectrum, lam: float, gate: float = HEAT_GATE, slope=None) -> JLambdaMap:
    """``J`` at every node, flagged as truncated when the spectral tail exceeds ``gate``."""
    _require_vectors(spectrum)
    if lam <= 0:
        raise DomainError("lambda must be positive")
    w = lam / (lam + spectrum.eigenvalues) ** 2
    values = (w @ spectrum.eigenvectors**2).reshape(spectrum.n, spectrum.n)
    frac = laplace_tail_bound(spectrum, lam, slope) / laplace_of_weighted_trace(spectrum, lam)
    return JLambdaMap(lam, values, float(frac), bool(frac > gate))
