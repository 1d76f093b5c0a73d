"""Stiffness/mass assembly and the low spectrum of the Liouville Dirichlet problem.

The generalized problem ``K f = lam M f`` is solved through its exact
symmetrization ``B = M^{-1/2} K M^{-1/2}`` (``M`` is diagonal).  Large spectra
are computed by spectrum slicing: a sequence of shift-invert Lanczos runs,
each returning the eigenvalues nearest its shift, glued where their trusted
intervals overlap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, PreconditionError
from .field import grid_laplacian
from .gmc import LiouvilleMeasure

log = logging.getLogger(__name__)

# K = GENERATOR_SCALE * S calibrates the generator to (1/2) Laplacian, which is
# what makes the classical Weyl constant come out as 1/(2 pi).
GENERATOR_SCALE = 0.5

DENSE_LIMIT = 1600


@dataclass
class OperatorPair:
    K: sp.csr_matrix
    mass: np.ndarray
    n: int
    gamma: float = 0.0

    @property
    def M(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    @property
    def dim(self) -> int:
        return self.mass.size

    def symmetrized(self) -> sp.csr_matrix:
        d = sp.diags(1.0 / np.sqrt(self.mass))
        return (d @ self.K @ d).tocsr()

    def scaled_mass(self, s: float) -> "OperatorPair":
        return OperatorPair(self.K, self.mass * s, self.n, self.gamma)


def assemble_pair(measure: LiouvilleMeasure, generator_scale: float = GENERATOR_SCALE) -> OperatorPair:
    n = measure.spec.n
    K = (generator_scale * grid_laplacian(n)).tocsr()
    return OperatorPair(K, measure.mass.ravel().copy(), n, measure.gamma)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None  # shape (k, n*n), mu-orthonormal rows
    n: int = 0
    gamma: float = 0.0
    seed: int = 0
    tol: float = 1e-8
    mass: Optional[np.ndarray] = None  # flat cell masses the vectors are normalised against
    solver_report: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    def vector(self, i: int) -> np.ndarray:
        if self.eigenvectors is None:
            raise PreconditionError("spectrum was computed without eigenvectors")
        return self.eigenvectors[i].reshape(self.n, self.n)

    def without_vectors(self) -> "Spectrum":
        return Spectrum(self.eigenvalues, None, self.n, self.gamma, self.seed, self.tol,
                        self.mass, dict(self.solver_report))


def spectrum_from_values(values, gamma: float = 0.0, n: int = 0) -> Spectrum:
    """Wrap bare eigenvalues (sorted on the way in) as a :class:`Spectrum`."""
    return Spectrum(np.sort(np.asarray(values, dtype=np.float64)), None, n, gamma)


def _residuals(pair: OperatorPair, lam: np.ndarray, f: np.ndarray) -> np.ndarray:
    # f has shape (dim, m)
    Kf = pair.K @ f
    r = Kf - (pair.mass[:, None] * f) * lam[None, :]
    return np.linalg.norm(r, axis=0) / np.linalg.norm(Kf, axis=0)


def solve_spectrum(
    pair: OperatorPair,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
    eigenvectors: bool = False,
    slice_size: int = 200,
    maxiter: Optional[int] = None,
    max_windows: Optional[int] = None,
) -> Spectrum:
    """Return the ``k`` smallest eigenpairs of ``K f = lam M f``.

    Small problems (``dim <= 1600``) are diagonalized densely; larger ones use
    spectrum slicing with shift-invert Lanczos.  Every returned pair satisfies
    ``|K f - lam M f| <= tol |K f|`` or a :class:`ConvergenceError` is raised.
    Starting vectors come from ``numpy.random.default_rng(seed)`` so results
    are deterministic.
    """
    dim = pair.dim
    if not 0 < tol <= 1e-4:
        raise PreconditionError(f"tol must lie in (0, 1e-4], got {tol}")
    if k < 1:
        raise PreconditionError("k must be >= 1")
    dense = dim <= DENSE_LIMIT
    if dense and k > dim:
        raise PreconditionError(f"k={k} exceeds the problem size {dim}")
    if not dense and k > dim // 2:
        raise PreconditionError(f"k={k} exceeds dim/2 = {dim // 2}")

    if dense:
        B = pair.symmetrized().toarray()
        lam, Y = sla.eigh(B, subset_by_index=[0, k - 1])
        F = Y / np.sqrt(pair.mass)[:, None]
        res = _residuals(pair, lam, F)
        report = {"method": "dense", "windows": []}
    else:
        lam, F, res, report = _slice_spectrum(pair, k, tol, seed, slice_size, maxiter,
                                              max_windows, keep_vectors=eigenvectors)

    report["residuals"] = res
    report["max_residual"] = float(res.max())
    if eigenvectors:
        gram = (F * pair.mass[:, None]).T @ F
        report["orthonormality_error"] = float(np.abs(gram - np.eye(k)).max())
    if not np.all(res <= tol):
        bad = int(np.argmax(res))
        raise ConvergenceError(
            f"residual {res[bad]:.3e} at eigenvalue {lam[bad]:.6g} exceeds tol={tol:g}",
            report,
        )
    if not np.all(lam > 0):
        raise ConvergenceError("non-positive eigenvalue returned", report)
    return Spectrum(
        eigenvalues=np.asarray(lam, dtype=np.float64),
        eigenvectors=np.ascontiguousarray(F.T) if eigenvectors else None,
        n=pair.n,
        gamma=pair.gamma,
        seed=seed,
        tol=tol,
        mass=pair.mass.copy(),
        solver_report=report,
    )


def _split_point(values: np.ndarray, lo: float, hi: float) -> float:
    """Midpoint of the widest eigenvalue gap inside ``(lo, hi)``."""
    inside = np.sort(values[(values > lo) & (values < hi)])
    pts = np.concatenate([[lo], inside, [hi]])
    g = int(np.argmax(np.diff(pts)))
    return 0.5 * (pts[g] + pts[g + 1])


def _slice_spectrum(pair, k, tol, seed, slice_size, maxiter, max_windows, keep_vectors):
    dim = pair.dim
    B = pair.symmetrized().tocsc()
    rng = np.random.default_rng(seed)
    kw = int(min(slice_size, max(k + 8, 20), dim - 2))
    ncv = min(dim - 1, 2 * kw + 1)
    arpack_tol = tol * 1e-3
    inv_sqrt_mass = 1.0 / np.sqrt(pair.mass)

    # accepted segments: (values, residuals, vectors or None); complete below `cut`
    segments = []
    total = 0
    cut = -np.inf
    sigma = 0.0
    windows = []
    limit = max_windows if max_windows is not None else 10 + 4 * (k // max(kw // 2, 1))

    while total < k:
        if len(windows) >= limit:
            raise ConvergenceError(
                f"spectrum slicing stopped after {len(windows)} windows with {total}/{k} eigenvalues",
                {"method": "slicing", "windows": windows,
                 "partial": np.concatenate([s[0] for s in segments]) if segments else np.empty(0)},
            )
        v0 = rng.standard_normal(dim)
        try:
            w, y = spla.eigsh(B, k=kw, sigma=sigma, which="LM", v0=v0, ncv=ncv,
                              tol=arpack_tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"shift-invert Lanczos did not converge at sigma={sigma:.6g}",
                {"method": "slicing", "windows": windows,
                 "converged_in_window": np.sort(exc.eigenvalues)},
            ) from exc
        order = np.argsort(w)
        w, y = w[order], y[:, order]
        dist = np.abs(w - sigma).max()
        slack = 1e-9 * max(abs(sigma) + dist, 1.0)
        lo_edge = sigma - dist + slack
        hi_edge = sigma + dist - slack
        if np.isfinite(cut) and lo_edge >= cut:
            # windows do not overlap; pull the shift back towards the cut and retry
            windows.append({"sigma": float(sigma), "count": kw, "accepted": 0, "retry": True})
            sigma = 0.5 * (sigma + cut)
            continue
        if np.isfinite(cut):
            prev = np.concatenate([s[0] for s in segments])
            split = _split_point(np.concatenate([prev, w]), lo_edge, cut)
            while segments and segments[-1][0].size and segments[-1][0][-1] >= split:
                vals, rr, vecs = segments.pop()
                keep = vals < split
                total -= vals.size
                if keep.any():
                    segments.append((vals[keep], rr[keep], None if vecs is None else vecs[:, keep]))
                    total += int(keep.sum())
                    break
            take = (w >= split) & (w < hi_edge)
        else:
            take = w < hi_edge
        f = y[:, take] * inv_sqrt_mass[:, None]
        rr = _residuals(pair, w[take], f)
        segments.append((w[take], rr, f if keep_vectors else None))
        total += int(take.sum())
        windows.append({"sigma": float(sigma), "count": kw, "lo": float(w[0]),
                        "hi": float(w[-1]), "accepted": int(take.sum())})
        log.debug("window sigma=%.6g accepted %d (total %d)", sigma, int(take.sum()), total)
        cut = hi_edge
        span = w[-1] - max(w[0], 0.0) if sigma > 0 else w[-1]
        sigma = cut + 0.375 * span

    lam = np.concatenate([s[0] for s in segments])
    res = np.concatenate([s[1] for s in segments])
    order = np.argsort(lam, kind="stable")[:k]
    F = None
    if keep_vectors:
        F = np.concatenate([s[2] for s in segments], axis=1)[:, order]
    return lam[order], F, res[order], {"method": "slicing", "windows": windows}
