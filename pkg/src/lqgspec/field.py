"""Discrete Dirichlet Gaussian free field on the unit square.

The field lives on the ``n x n`` interior nodes of the grid with spacing
``a = 1/(n+1)``.  Node ``(i, j)`` (0-based) sits at ``((i+1) a, (j+1) a)`` and
arrays are indexed ``values[i, j]`` (x-index first), flattened row-major.

Covariance convention: ``E[h(v) h(w)] = 2*pi * S^{-1}[v, w]`` where ``S`` is the
unweighted 5-point graph Laplacian with Dirichlet boundary, so that
``E[h(v) h(w)] = -log|v - w| + log R(v; D) + o(1)`` away from the diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn

from .errors import (
    DomainError,
    InsufficientProbesError,
    InvalidSpecError,
    LQGError,
    PreconditionError,
)

TWO_PI = 2.0 * np.pi

Node = tuple[int, int]


@dataclass(frozen=True)
class GridSpec:
    n: int
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidSpecError(f"grid needs n >= 1 interior nodes per side, got {self.n!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpecError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, y)`` coordinate arrays of shape ``(n, n)``."""
        t = np.arange(1, self.n + 1) * self.spacing
        return np.meshgrid(t, t, indexing="ij")

    def node_xy(self, node: Node) -> np.ndarray:
        i, j = node
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise InvalidSpecError(f"node {node} outside the {self.n}x{self.n} grid")
        return np.array([(i + 1) * self.spacing, (j + 1) * self.spacing])

    def with_seed(self, seed: int) -> "GridSpec":
        return GridSpec(self.n, seed)


@dataclass
class GridField:
    spec: GridSpec
    values: np.ndarray
    kind: str = "gff"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n, self.spec.n):
            raise InvalidSpecError(
                f"field shape {self.values.shape} does not match grid n={self.spec.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise LQGError("field values must be finite")


def grid_laplacian(n: int, mask: np.ndarray | None = None) -> sp.csr_matrix:
    """5-point graph Laplacian on interior nodes with Dirichlet boundary.

    Every diagonal entry is 4; neighbours outside the grid (or outside
    ``mask``) are boundary nodes and simply drop out.
    """
    one = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = sp.identity(n)
    S = (sp.kron(one, eye) + sp.kron(eye, one)).tocsr()
    if mask is not None:
        keep = np.flatnonzero(np.asarray(mask).ravel())
        S = S[keep][:, keep].tocsr()
    return S


def laplacian_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues ``sigma[p, q]`` of :func:`grid_laplacian` for the sine mode (p+1, q+1)."""
    a = 1.0 / (n + 1)
    one = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) * a)
    return one[:, None] + one[None, :]


def sine_modes(n: int) -> np.ndarray:
    """Orthonormal 1D sine basis ``phi[i, p] = sqrt(2/(n+1)) sin(pi (i+1)(p+1)/(n+1))``."""
    idx = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(idx, idx) / (n + 1))


def _dst2(x: np.ndarray) -> np.ndarray:
    # orthonormal DST-I is symmetric and its own inverse
    return dstn(x, type=1, norm="ortho", axes=(-2, -1))


def sample_gff(spec: GridSpec) -> GridField:
    """Exact sample of the discrete Dirichlet GFF, deterministic in ``spec.seed``.

    Examples
    --------
    >>> f = sample_gff(GridSpec(1, seed=3))
    >>> f.values.shape
    (1, 1)
    """
    rng = np.random.default_rng(spec.seed)
    return GridField(spec, _gff_from_normals(spec.n, rng.standard_normal((spec.n, spec.n))))


def sample_gff_many(spec: GridSpec, count: int, batch: int = 4096) -> np.ndarray:
    """Draw ``count`` independent fields from one stream seeded by ``spec.seed``.

    Returns an array of shape ``(count, n, n)``.  Batching only bounds memory;
    the result does not depend on ``batch``.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    out = np.empty((count, n, n))
    for lo in range(0, count, batch):
        hi = min(count, lo + batch)
        out[lo:hi] = _gff_from_normals(n, rng.standard_normal((hi - lo, n, n)))
    return out


def _gff_from_normals(n: int, xi: np.ndarray) -> np.ndarray:
    scale = np.sqrt(TWO_PI / laplacian_eigenvalues(n))
    return _dst2(xi * scale)


def disc_mask(spec: GridSpec, center=(0.5, 0.5), radius: float = 0.5) -> np.ndarray:
    x, y = spec.coords()
    return (x - center[0]) ** 2 + (y - center[1]) ** 2 < radius**2


@dataclass
class GreenTable:
    """Diagonal and selected rows of ``C = 2*pi*S^{-1}``.

    ``diag`` is NaN outside the domain mask (and, in disc mode, at nodes whose
    row was not requested).
    """

    spec: GridSpec
    diag: np.ndarray
    rows: dict = dc_field(default_factory=dict)
    domain: str = "square"
    mask: np.ndarray | None = None
    disc_center: tuple = (0.5, 0.5)
    disc_radius: float = 0.5

    def row(self, v: Node) -> np.ndarray:
        v = tuple(int(c) for c in v)
        if v not in self.rows:
            raise PreconditionError(f"no probe row stored for node {v}")
        return self.rows[v]

    def covariance(self, v: Node, w: Node) -> float:
        return float(self.row(v)[tuple(w)])

    def boundary_distance(self, v: Node) -> float:
        x, y = self.spec.node_xy(v)
        if self.domain == "disc":
            cx, cy = self.disc_center
            return self.disc_radius - float(np.hypot(x - cx, y - cy))
        return float(min(x, 1.0 - x, y, 1.0 - y))


def _normalize_probes(probes) -> list[Node]:
    nodes: list[Node] = []
    for p in probes:
        p = tuple(p)
        if len(p) == 2 and all(np.ndim(c) == 0 for c in p):
            nodes.append((int(p[0]), int(p[1])))
        else:
            for q in p:
                nodes.append((int(q[0]), int(q[1])))
    seen = dict.fromkeys(nodes)
    return list(seen)


def discrete_green(
    spec: GridSpec,
    probes: Iterable = (),
    domain: str = "square",
) -> GreenTable:
    """Compute ``V(v) = 2*pi*S^{-1}[v, v]`` and the full rows for probe nodes.

    ``probes`` may hold nodes ``(i, j)`` or node pairs ``((i, j), (k, l))``;
    a full row is stored for every node mentioned.  On the square the sine
    basis gives the diagonal in closed form and each row by two fast
    transforms.  ``domain="disc"`` restricts to the inscribed disc of radius
    1/2 and uses sparse LU solves; there only probe-node diagonals are filled.
    """
    n = spec.n
    nodes = _normalize_probes(probes)
    for v in nodes:
        spec.node_xy(v)

    if domain == "square":
        sigma = laplacian_eigenvalues(n)
        if not np.all(sigma > 0):
            raise LQGError("Dirichlet Laplacian is not positive definite")
        phi2 = sine_modes(n) ** 2
        diag = TWO_PI * (phi2 @ (1.0 / sigma) @ phi2.T)
        rows = {}
        for v in nodes:
            e = np.zeros((n, n))
            e[v] = 1.0
            rows[v] = TWO_PI * _dst2(_dst2(e) / sigma)
        return GreenTable(spec, diag, rows, "square", None)

    if domain == "disc":
        mask = disc_mask(spec)
        for v in nodes:
            if not mask[v]:
                raise PreconditionError(f"probe node {v} lies outside the disc")
        S = grid_laplacian(n, mask).tocsc()
        lu = spla.splu(S)
        index = -np.ones(n * n, dtype=np.int64)
        keep = np.flatnonzero(mask.ravel())
        index[keep] = np.arange(keep.size)
        diag = np.full((n, n), np.nan)
        rows = {}
        for v in nodes:
            e = np.zeros(keep.size)
            e[index[v[0] * n + v[1]]] = 1.0
            sol = lu.solve(e)
            if not np.all(sol >= -1e-10):
                raise LQGError("disc Green row violates the maximum principle; solve failed")
            full = np.zeros(n * n)
            full[keep] = TWO_PI * sol
            rows[v] = full.reshape(n, n)
            diag[v] = rows[v][v]
        return GreenTable(spec, diag, rows, "disc", mask)

    raise InvalidSpecError(f"unknown domain {domain!r}")


def conformal_radius_estimate(green: GreenTable, v: Node, window=None, return_count=False):
    """Fit ``C(v, w) = -log|v - w| + log R`` over probe nodes in an annulus.

    The default annulus is ``4a <= |v - w| <= d(v, dD)/4``; the slope is held at
    -1 so the least-squares fit of ``log R`` is the mean of
    ``C(v, w) + log|v - w|``.  Off-diagonal values avoid the lattice
    self-energy that contaminates ``V(v)``.
    """
    spec = green.spec
    a = spec.spacing
    row = green.row(v)
    d = green.boundary_distance(v)
    if d < 8 * a - 1e-12:
        raise PreconditionError(f"node {tuple(v)} is {d:.4g} from the boundary, need >= 8a")
    lo, hi = window if window is not None else (4 * a, d / 4)
    x, y = spec.coords()
    vx, vy = spec.node_xy(v)
    r = np.hypot(x - vx, y - vy)
    sel = (r >= lo - 1e-12) & (r <= hi + 1e-12)
    if green.mask is not None:
        sel &= green.mask
    count = int(sel.sum())
    if count < 8:
        raise InsufficientProbesError(f"only {count} probe nodes in fit window [{lo:.4g}, {hi:.4g}]")
    log_r = float(np.mean(row[sel] + np.log(r[sel])))
    radius = float(np.exp(log_r))
    return (radius, count) if return_count else radius


def sample_disc_series_field(k_max: int, points, seed: int, n_samples: int | None = None):
    """Sample ``Y(z) = Re sum_{k<=k_max} sqrt(2/k) zeta_k z^k`` at complex ``points``.

    ``zeta_k`` are standard complex Gaussians.  With ``n_samples=None`` one
    realisation is returned as a list; otherwise an array of shape
    ``(n_samples, len(points))``.
    """
    if k_max < 1:
        raise InvalidSpecError("k_max must be >= 1")
    z = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("series field is only defined inside the unit disc")
    if np.any(np.abs(z) > 0.95):
        raise DomainError("points must satisfy |z| <= 0.95 for truncation control")
    k = np.arange(1, k_max + 1)
    basis = np.sqrt(2.0 / k)[:, None] * z[None, :] ** k[:, None]
    rng = np.random.default_rng(seed)
    m = 1 if n_samples is None else int(n_samples)
    out = np.empty((m, z.size))
    batch = 8192
    for lo in range(0, m, batch):
        hi = min(m, lo + batch)
        g = rng.standard_normal((hi - lo, k_max, 2))
        zeta = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
        out[lo:hi] = (zeta @ basis).real
    if n_samples is None:
        return out[0].tolist()
    return out
