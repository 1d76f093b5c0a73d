"""Acceptance gates, each run at its stated tolerance.

Every test records exactly one PASS/FAIL line (collected in the terminal
summary) before asserting.  Large spectra are cached under
``LQG_ACCEPTANCE_CACHE`` (default ``tests/.acceptance_cache``); delete the
directory for a cold run.
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from lqgspec import cli, io
from lqgspec.asymptotics import tauberian_check
from lqgspec.field import (
    GridField,
    GridSpec,
    discrete_green,
    grid_laplacian,
    sample_disc_series_field,
    sample_gff,
    sample_gff_many,
)
from lqgspec.gmc import build_measure, expected_mass
from lqgspec.heat import heat_trace, j_lambda_map, laplace_of_weighted_trace
from lqgspec.paths import bridge_max_exceedance, conditioned_marginal, estimate_cone_constant
from lqgspec.spectral import assemble_pair, solve_spectrum
from lqgspec.stats import C0, c_gamma, spacing_stats, weyl_fit

pytestmark = pytest.mark.slow

CACHE = Path(os.environ.get("LQG_ACCEPTANCE_CACHE", Path(__file__).parent / ".acceptance_cache"))
SEEDS = (1, 2, 3)
N_LQG, K_LQG, GAMMA = 255, 2500, 0.5
WINDOW = (300, 1500)


def _spectrum(n, gamma, seed, k, tol=1e-8):
    """Eigenvalues and total mass, cached on disk in the package formats."""
    CACHE.mkdir(parents=True, exist_ok=True)
    stem = f"n{n}_g{gamma!r}_s{seed}_k{k}_tol{tol!r}"
    spath, mpath = CACHE / f"{stem}.lqgs", CACHE / f"{stem}.lqgm"
    if spath.exists() and mpath.exists():
        spec, _ = io.read_spectrum(spath)
        meas, _ = io.read_measure(mpath)
        return spec, meas
    meas = build_measure(sample_gff(GridSpec(n, seed)), gamma)
    spec = solve_spectrum(assemble_pair(meas), k, tol=tol, seed=seed)
    io.write_measure(mpath, meas)
    io.write_spectrum(spath, spec)
    return spec, meas


@pytest.fixture(scope="module")
def lqg_runs():
    return {s: _spectrum(N_LQG, GAMMA, s, K_LQG) for s in SEEDS}


def test_criterion_01_flat_weyl_slope(verdict):
    spec, meas = _spectrum(255, 0.0, 1, 800)
    fit = weyl_fit(spec, 0.0, meas, (100, 800))
    rel = abs(fit.slope / meas.total / C0 - 1)
    ok = verdict("1 flat Weyl slope", rel <= 0.03,
                 f"slope/mu(D) = {fit.slope / meas.total:.6f} vs c0 = {C0:.6f}, rel err {rel:.4f} (tol 0.03); "
                 f"unnormalized slope {fit.slope:.6f}")
    assert ok


def test_criterion_02_exact_discrete_spectrum(verdict):
    n = 127
    meas = build_measure(GridField(GridSpec(n), np.zeros((n, n))), 0.0)
    vals = solve_spectrum(assemble_pair(meas), 20, seed=1).eigenvalues
    q = sorted(i * i + j * j for i in range(1, 12) for j in range(1, 12))[:20]
    exact = np.pi**2 * np.asarray(q, float) / 2
    rel = np.abs(vals / exact - 1)
    # levels differ by at least 2%, so counting within 1% recovers multiplicities
    mult_ok = all(np.sum(np.abs(vals / e - 1) <= 0.01) == q.count(v) for e, v in zip(exact, q))
    ok = verdict("2 discrete spectrum", rel.max() <= 0.01 and mult_ok,
                 f"max rel err {rel.max():.2e} (tol 0.01), multiplicities {'match' if mult_ok else 'differ'}")
    assert ok


def _weyl_quotients(runs):
    return {s: weyl_fit(spec, GAMMA, meas, WINDOW).slope / meas.total for s, (spec, meas) in runs.items()}


def test_criterion_03_lqg_weyl_law(verdict, lqg_runs):
    q = _weyl_quotients(lqg_runs)
    devs = {s: abs(v / c_gamma(GAMMA) - 1) for s, v in q.items()}
    med = float(np.median(list(devs.values())))
    per = ", ".join(f"seed {s}: {d:.4f}" for s, d in devs.items())
    ok = verdict("3 LQG Weyl law", med <= 0.10, f"median |ratio-1| = {med:.4f} (tol 0.10); {per}")
    assert ok


def test_criterion_04_riemannian_gap(verdict, lqg_runs):
    q = float(np.median(list(_weyl_quotients(lqg_runs).values())))
    d_gamma, d_zero = abs(q / c_gamma(GAMMA) - 1), abs(q / C0 - 1)
    ok = verdict("4 closer to c_gamma than c_0", d_gamma < d_zero,
                 f"|q/c_gamma-1| = {d_gamma:.4f}, |q/c_0-1| = {d_zero:.4f}, margin {d_zero - d_gamma:.4f}")
    assert ok


def _cone_case(gamma, m):
    est = estimate_cone_constant(gamma, m, "I", dt=1e-3, n_paths=100_000, seed=1)
    return est, abs(est.z_score) <= 3 and est.rel_error <= 0.02


def test_criterion_05_cone_constant(verdict):
    parts, good = [], True
    for gamma, m in ((1.0, 1.0), (0.5, 3.75), (1.5, 1.0)):
        est, ok = _cone_case(gamma, m)
        good &= ok
        parts.append(f"({gamma},{m}) {est.mean:.5f}+-{est.stderr:.5f} vs {est.target:.5f}, "
                     f"z {est.z_score:+.2f}, rel {est.rel_error:.4f}")
    ok = verdict("5 cone constant", good, "; ".join(parts) + " (tol 3 SE and 2%)")
    assert ok


def _passing_decade(curve, ref, tol=0.15):
    """Longest run of consecutive grid points that are resolved and within ``tol``."""
    good = curve.resolved & (np.abs(curve.tS / ref - 1) <= tol)
    best, start = None, None
    for i, g in enumerate(np.append(good, False)):
        if g and start is None:
            start = i
        elif not g and start is not None:
            if best is None or curve.t[i - 1] / curve.t[start] > curve.t[best[1]] / curve.t[best[0]]:
                best = (start, i - 1)
            start = None
    return best


def _laplace_dev(spec, ref, t_lo, t_hi):
    lam = np.logspace(math.log10(1 / t_hi), math.log10(1 / t_lo), 33)
    lap = np.array([l * laplace_of_weighted_trace(spec, l) for l in lam]) / ref
    return float(np.abs(lap - 1).max())


def test_criterion_06_heat_trace(verdict, lqg_runs):
    spec, meas = lqg_runs[1]
    ref = c_gamma(GAMMA) * meas.total
    curve = heat_trace(spec, np.logspace(-5, -1, 65))
    run = _passing_decade(curve, ref)
    if run is None:
        ok = verdict("6 heat trace", False, "no resolved t within 15%")
        assert ok
    t = curve.t[run[0]:run[1] + 1]
    full_dev = _laplace_dev(spec, ref, t[0], t[-1])
    # any sub-interval of at least one decade qualifies; prefer the widest that passes, then the smallest deviation
    best = None
    for i in range(t.size):
        for j in range(i + 1, t.size):
            if t[j] / t[i] < 10 * (1 - 1e-12):
                continue
            dev = _laplace_dev(spec, ref, t[i], t[j])
            key = (dev <= 0.15, t[j] / t[i] if dev <= 0.15 else -dev)
            if best is None or key > best[0]:
                best = (key, t[i], t[j], dev)
    if best is None:
        ok = verdict("6 heat trace", False,
                     f"tS within 15% only on t in [{t[0]:.2e}, {t[-1]:.2e}], less than one decade")
        assert ok
    _, t_lo, t_hi, dev = best
    ok = verdict("6 heat trace", dev <= 0.15,
                 f"tS within 15% on resolved t in [{t[0]:.2e}, {t[-1]:.2e}] "
                 f"({math.log10(t[-1] / t[0]):.2f} decades); Laplace side max dev {dev:.3f} (tol 0.15) on "
                 f"lambda in [{1 / t_hi:.0f}, {1 / t_lo:.0f}] ({math.log10(t_hi / t_lo):.2f} decades); "
                 f"over the whole t run it is {full_dev:.3f}")
    assert ok


def test_criterion_07_bridge_law(verdict):
    levels = (0.5, 1.0, 1.5)
    coarse = bridge_max_exceedance(levels, 1.0, steps=1000, n_paths=100_000, seed=1)
    fine = bridge_max_exceedance(levels, 1.0, steps=2000, n_paths=100_000, seed=2)
    z_ok = all(abs(c.z_score) <= 4 for c in coarse + fine)
    shift = [abs(a.probability - b.probability) / math.hypot(a.stderr, b.stderr) for a, b in zip(coarse, fine)]
    stable = all(s <= 4 for s in shift)
    detail = ", ".join(f"k={c.level}: p {c.probability:.5f} vs {c.exact:.5f} z {c.z_score:+.2f}/{f.z_score:+.2f}"
                       for c, f in zip(coarse, fine))
    ok = verdict("7 bridge maximum law", z_ok and stable,
                 f"{detail}; refinement shift {max(shift):.2f} SE (tol 4)")
    assert ok


def test_criterion_08_mean_spacing(verdict, lqg_runs):
    st = {s: spacing_stats(spec, GAMMA, meas, WINDOW) for s, (spec, meas) in lqg_runs.items()}
    med = float(np.median([x.mean_gap for x in st.values()]))
    per = ", ".join(f"seed {s}: gap {x.mean_gap:.4f} KS {x.ks_vs_wigner:.3f}" for s, x in st.items())
    ok = verdict("8 mean unfolded spacing", abs(med - 1) <= 0.05, f"median mean gap {med:.4f} (tol 0.05); {per}")
    assert ok


def test_criterion_09_field_oracles(verdict):
    # (a) covariance against 2 pi S^-1 on every pair of an 8x8 grid
    spec = GridSpec(8, seed=91)
    x = sample_gff_many(spec, 200_000).reshape(200_000, -1)
    C = 2 * math.pi * np.linalg.inv(grid_laplacian(8).toarray())
    emp = x.T @ x / x.shape[0]
    se = np.sqrt(np.maximum((x**2).T @ (x**2) / x.shape[0] - emp**2, 0) / x.shape[0])
    za = float(np.max(np.abs(emp - C) / se))
    # (b) lognormal mean of the cell masses and of the total
    g = 0.5
    masses = spec.spacing ** (2 + g**2 / 2) * np.exp(g * x)
    exp_m = expected_mass(discrete_green(spec), g).ravel()
    zb_cells = np.abs(masses.mean(0) - exp_m) / (masses.std(0, ddof=1) / math.sqrt(x.shape[0]))
    tot = masses.sum(1)
    zb_tot = abs(tot.mean() - exp_m.sum()) / (tot.std(ddof=1) / math.sqrt(tot.size))
    zb = float(max(zb_cells.max(), zb_tot))
    # (c) series field variance
    pts = np.array([0.3, 0.5j, -0.7, 0.6 + 0.6j, 0.9j])
    y = sample_disc_series_field(256, pts, seed=93, n_samples=200_000)
    target = -np.log(1 - np.abs(pts) ** 2)
    zc = float(np.max(np.abs((y**2).mean(0) - target) / ((y**2).std(0, ddof=1) / math.sqrt(y.shape[0]))))
    ok = verdict("9 field/measure oracles", max(za, zb, zc) <= 4,
                 f"max |z|: covariance {za:.2f} (4096 entries), lognormal mean {zb:.2f}, "
                 f"series variance {zc:.2f} (tol 4)")
    assert ok


def test_criterion_10_tauberian(verdict):
    devs = {rho: tauberian_check(rho).max_rel_dev for rho in (0.5, 1.0, 2.0)}
    log_r = float(tauberian_check(0.5, density="log", grid=[1e6]).ratio[0])
    ok = verdict("10 Tauberian numerics", max(devs.values()) <= 1e-4 and abs(log_r - 1) <= 0.02,
                 ", ".join(f"rho={r}: {d:.1e}" for r, d in devs.items())
                 + f" (tol 1e-4); log case ratio {log_r:.5f} at 1e6 (tol 0.02)")
    assert ok


def test_criterion_11_property_suite(verdict, tmp_path):
    notes, good = [], True
    # measure scaling: masses times s divide the eigenvalues by s
    meas = build_measure(sample_gff(GridSpec(30, seed=5)), 0.5)
    base = solve_spectrum(assemble_pair(meas), 100).eigenvalues
    s = 3.7
    scaled = type(meas).from_masses(meas.spec, meas.gamma, meas.mass * s)
    dev = float(np.max(np.abs(solve_spectrum(assemble_pair(scaled), 100).eigenvalues * s / base - 1)))
    good &= dev <= 1e-10
    notes.append(f"scaling {dev:.1e}")
    # sum_x J(x) mu(x) against lambda sum (lambda + lambda_n)^-2
    small = build_measure(sample_gff(GridSpec(24, seed=3)), 0.5)
    sp = solve_spectrum(assemble_pair(small), 200, eigenvectors=True)
    jdev = 0.0
    for lam in (3.0, 30.0, 300.0):
        jm = j_lambda_map(sp, lam)
        lhs = math.fsum((jm.values * small.mass).ravel())
        jdev = max(jdev, abs(lhs / (lam * laplace_of_weighted_trace(sp, lam)) - 1))
    good &= jdev <= 1e-12
    notes.append(f"J identity {jdev:.1e}")
    # byte identity of CLI artifacts
    args = ["--n", "31", "--gamma", "0.5", "--k", "60", "--seed", "4"]
    for out in ("a", "b"):
        assert cli.main(["solve-spectrum", *args, "--out", str(tmp_path / out)]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("measure.lqgm", "spectrum.lqgs"))
    good &= same
    notes.append(f"byte identity {'yes' if same else 'no'}")
    # three samplers of the conditioned marginal
    w = conditioned_marginal(1.0, 1.0, 10_000, seed=1, method="williams")
    h = conditioned_marginal(1.0, 1.0, 10_000, seed=2, method="htransform")
    r = conditioned_marginal(1.0, 1.0, 10_000, seed=3, method="rejection")
    ks = max(sps.ks_2samp(a, b).statistic for a, b in ((w, h), (w, r), (h, r)))
    good &= ks <= 0.03
    notes.append(f"sampler KS {ks:.4f} (tol 0.03)")
    ok = verdict("11 property suite", good, ", ".join(notes))
    assert ok
