"""Lattice Gaussian multiplicative chaos (Liouville measure)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyRegionError, GridMismatchError
from .field import GreenTable, GridField, GridSpec


@dataclass
class LiouvilleMeasure:
    """Per-cell masses ``mass[i, j]`` and their total.

    ``total`` is the correctly rounded sum of ``mass`` (``math.fsum``).
    """

    spec: GridSpec
    gamma: float
    mass: np.ndarray
    total: float

    @classmethod
    def from_masses(cls, spec: GridSpec, gamma: float, mass) -> "LiouvilleMeasure":
        mass = np.asarray(mass, dtype=np.float64)
        if mass.shape != (spec.n, spec.n):
            raise GridMismatchError(f"mass shape {mass.shape} does not match n={spec.n}")
        if not np.all(mass > 0):
            raise DomainError("cell masses must be strictly positive")
        return cls(spec, float(gamma), mass, math.fsum(mass.ravel()))

    def scaled(self, s: float) -> "LiouvilleMeasure":
        return LiouvilleMeasure.from_masses(self.spec, self.gamma, self.mass * s)

    @property
    def density(self) -> np.ndarray:
        """Mass per unit Lebesgue area, ``mass / a^2``."""
        return self.mass / self.spec.spacing**2


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma < 2.0:
        raise DomainError(f"gamma must lie in [0, 2), got {gamma}")
    return gamma


def build_measure(field: GridField, gamma: float) -> LiouvilleMeasure:
    """``mass(v) = a^(2 + gamma^2/2) * exp(gamma h(v))``, i.e. eps^(gamma^2/2) e^(gamma h_eps) with eps = a.

    >>> from lqgspec.field import GridSpec, GridField
    >>> import numpy as np
    >>> m = build_measure(GridField(GridSpec(3), np.zeros((3, 3))), 0.0)
    >>> m.total
    0.5625
    """
    gamma = check_gamma(gamma)
    a = field.spec.spacing
    mass = a ** (2.0 + 0.5 * gamma**2) * np.exp(gamma * field.values)
    return LiouvilleMeasure.from_masses(field.spec, gamma, mass)


def expected_mass(green: GreenTable, gamma: float) -> np.ndarray:
    """Lognormal mean ``E[mass(v)] = a^(2 + gamma^2/2) exp(gamma^2 V(v) / 2)``."""
    gamma = check_gamma(gamma)
    a = green.spec.spacing
    return a ** (2.0 + 0.5 * gamma**2) * np.exp(0.5 * gamma**2 * green.diag)


def region_mask(spec: GridSpec, region) -> np.ndarray:
    """Turn a region description into a boolean cell mask.

    ``region`` is either a boolean array of shape ``(n, n)`` or a callable
    ``region(x, y)`` evaluated on cell-centre coordinate arrays.
    """
    if callable(region):
        x, y = spec.coords()
        mask = np.asarray(region(x, y), dtype=bool)
    else:
        mask = np.asarray(region, dtype=bool)
    if mask.shape != (spec.n, spec.n):
        raise GridMismatchError(f"region mask shape {mask.shape} does not match n={spec.n}")
    return mask


def region_mass(measure: LiouvilleMeasure, region) -> float:
    mask = region_mask(measure.spec, region)
    if not mask.any():
        raise EmptyRegionError("region selects no cells")
    return math.fsum(measure.mass[mask])
