"""Eigenvalue counting, Weyl-slope fits, level spacings and eigenfunction overlaps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .gmc import LiouvilleMeasure, region_mask
from .spectral import Spectrum


def c_gamma(gamma: float) -> float:
    """Weyl constant ``1 / (pi (2 - gamma^2/2))`` for ``0 <= gamma < 2``.

    >>> round(c_gamma(0.0), 7)
    0.1591549
    """
    gamma = float(gamma)
    if not 0.0 <= gamma < 2.0:
        raise DomainError(f"c_gamma is finite only for gamma in [0, 2), got {gamma}")
    return 1.0 / (math.pi * (2.0 - 0.5 * gamma**2))


C0 = 1.0 / (2.0 * math.pi)


def _values(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    return np.sort(np.asarray(spectrum, dtype=np.float64))


def _total_mass(measure) -> float:
    if isinstance(measure, LiouvilleMeasure):
        return measure.total
    return float(measure)


def counting_function(spectrum, lam):
    """``N(lam) = #{n : lambda_n <= lam}`` (right-continuous); vectorized over ``lam``."""
    vals = _values(spectrum)
    if vals.size == 0:
        raise PreconditionError("empty spectrum")
    out = np.searchsorted(vals, lam, side="right")
    return int(out) if np.ndim(out) == 0 else out


def _check_window(vals: np.ndarray, window, min_lo: int = 100, min_len: int = 50):
    lo, hi = (int(w) for w in window)
    if lo < min_lo:
        raise PreconditionError(f"window must start at index >= {min_lo}, got {lo}")
    if hi - lo < min_len:
        raise PreconditionError(f"window ({lo}, {hi}) is shorter than {min_len} indices")
    if hi > vals.size:
        raise PreconditionError(f"window end {hi} exceeds the {vals.size} computed eigenvalues")
    return lo, hi


@dataclass
class WeylFit:
    slope: float
    window: tuple
    residual: float
    reference: float
    riemannian: float

    @property
    def ratio(self) -> float:
        return self.slope / self.reference


def weyl_fit(spectrum, gamma: float, measure, window=(300, 1500)) -> WeylFit:
    """Least-squares slope through the origin of ``N(lambda_j) = j`` on ``window``.

    ``window`` holds 1-based inclusive eigenvalue indices.  ``measure`` is a
    :class:`LiouvilleMeasure` or just its total mass.
    """
    vals = _values(spectrum)
    lo, hi = _check_window(vals, window)
    j = np.arange(lo, hi + 1, dtype=np.float64)
    lam = vals[lo - 1:hi]
    slope = float(j @ lam / (lam @ lam))
    if not slope > 0:
        raise PreconditionError("degenerate window: non-positive slope")
    resid = float(np.sqrt(np.mean((j - slope * lam) ** 2)))
    total = _total_mass(measure)
    return WeylFit(slope, (lo, hi), resid, c_gamma(gamma) * total, C0 * total)


@dataclass
class SubleadingFit:
    amplitude: float
    exponent: float
    points: int
    degenerate: bool = False


def subleading_fit(spectrum, gamma: float, measure, window=(300, 1500)) -> SubleadingFit:
    """Fit ``|c_gamma mu(D) lambda_j - j| ~ A lambda_j^b`` by log-log regression.

    Diagnostic only.  An input that is exactly linear is reported as
    ``degenerate`` with zero amplitude and NaN exponent.
    """
    vals = _values(spectrum)
    lo, hi = _check_window(vals, window)
    j = np.arange(lo, hi + 1, dtype=np.float64)
    lam = vals[lo - 1:hi]
    dev = np.abs(c_gamma(gamma) * _total_mass(measure) * lam - j)
    if dev.max() <= 1e-9 * hi:
        return SubleadingFit(0.0, math.nan, 0, True)
    use = dev > 1e-9 * hi
    if use.sum() < 50:
        raise PreconditionError(f"only {int(use.sum())} usable points for the power-law fit")
    b, log_amp = np.polyfit(np.log(lam[use]), np.log(dev[use]), 1)
    return SubleadingFit(float(np.exp(log_amp)), float(b), int(use.sum()))


def wigner_cdf(s):
    """Wigner surmise CDF ``1 - exp(-pi s^2 / 4)``."""
    s = np.asarray(s, dtype=np.float64)
    return 1.0 - np.exp(-0.25 * np.pi * s * s)


def ks_distance(samples, cdf) -> float:
    """Exact sup-distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    m = x.size
    F = cdf(x)
    upper = np.arange(1, m + 1) / m - F
    lower = F - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))


@dataclass
class SpacingStats:
    gaps: np.ndarray
    grid: np.ndarray
    ecdf: np.ndarray
    mean_gap: float
    ks_vs_wigner: float
    window: tuple


def spacing_stats(spectrum, gamma: float, measure, window=(300, 1500), grid=None) -> SpacingStats:
    """Rescaled gaps ``c_gamma mu(D) (lambda_{j+1} - lambda_j)`` for ``lo <= j < hi``."""
    vals = _values(spectrum)
    lo, hi = _check_window(vals, window, min_lo=1, min_len=200)
    unit = c_gamma(gamma) * _total_mass(measure)
    gaps = unit * np.diff(vals[lo - 1:hi])
    if grid is None:
        grid = np.linspace(0.0, 4.0, 401)
    grid = np.asarray(grid, dtype=np.float64)
    ecdf = np.searchsorted(np.sort(gaps), grid, side="right") / gaps.size
    return SpacingStats(
        gaps=gaps,
        grid=grid,
        ecdf=ecdf,
        mean_gap=float(np.mean(gaps)),
        ks_vs_wigner=ks_distance(gaps, wigner_cdf),
        window=(lo, hi),
    )


@dataclass
class OverlapRow:
    n: int
    region: str
    overlap: float
    target: float
    ipr: float


def que_overlap(spectrum: Spectrum, measure: LiouvilleMeasure, regions: dict, indices=None):
    """Per-eigenfunction mass ``sum_{v in A} f_n(v)^2 mu(v)`` against ``mu(A)/mu(D)``.

    ``regions`` maps names to boolean masks or predicates ``(x, y) -> bool``.
    Indices in the output are 1-based.  Also reports the inverse participation
    ratio ``sum_v (f_n(v)^2 mu(v))^2``.
    """
    if spectrum.eigenvectors is None:
        raise PreconditionError("que_overlap needs eigenvectors")
    mu = measure.mass.ravel()
    if indices is None:
        indices = range(1, spectrum.k + 1)
    masks = {name: region_mask(measure.spec, r).ravel() for name, r in regions.items()}
    targets = {name: math.fsum(mu[m]) / measure.total for name, m in masks.items()}
    rows = []
    for idx in indices:
        density = spectrum.eigenvectors[idx - 1] ** 2 * mu
        ipr = float(np.sum(density**2))
        for name, m in masks.items():
            rows.append(OverlapRow(int(idx), name, float(density[m].sum()), targets[name], ipr))
    return rows
