import math

import numba
import numpy as np
import pytest
from scipy import stats as sps

from lqgspec.errors import CapExceededError, DomainError, GridMismatchError, PreconditionError
from lqgspec.field import GridField, GridSpec, discrete_green, sample_gff
from lqgspec.gmc import build_measure
from lqgspec.paths import (
    PathSample,
    bridge_ball_probability,
    bridge_max_exceedance,
    cone_horizon,
    conditioned_marginal,
    estimate_cone_constant,
    liouville_clock,
    sample_beta,
    sample_bridge2d,
    sample_conditioned,
)


def test_bridge_endpoints_exact():
    for seed in range(5):
        p = sample_bridge2d((0.3, 0.7), 0.5, 100, seed)
        assert tuple(p.values[0]) == (0.3, 0.7)
        assert tuple(p.values[-1]) == (0.3, 0.7)
        assert p.times[-1] == 0.5 and p.kind == "bridge2d"
    with pytest.raises(PreconditionError):
        sample_bridge2d((0, 0), 1.0, 1, 0)


def test_bridge_max_law_small():
    checks = bridge_max_exceedance([0.5, 1.0], 1.0, steps=200, n_paths=20_000, seed=3)
    for c in checks:
        assert abs(c.z_score) < 4
    assert checks[1].exact == pytest.approx(math.exp(-2.0))


def test_bridge_raw_grid_max_is_biased_low():
    raw = bridge_max_exceedance([1.0], 1.0, steps=50, n_paths=20_000, seed=3, correction=False)[0]
    fixed = bridge_max_exceedance([1.0], 1.0, steps=50, n_paths=20_000, seed=3)[0]
    assert raw.probability < fixed.probability
    assert raw.z_score < -4


def test_bridge_ball_bound():
    for u, p, bound in bridge_ball_probability([0.1, 0.3, 1.0], 1.0, steps=500, n_paths=5000, seed=1):
        assert p <= bound


def test_conditioned_path_shape():
    p = sample_conditioned(1.0, 2.0, 1e-3, seed=4)
    assert p.values[0] == 0.0 and p.values[-1] == 2.0
    assert np.all(p.values >= 0.0)
    assert np.all(np.diff(p.times) > 0)
    assert p.times[-1] == pytest.approx(p.params["tau"])


def test_conditioned_errors():
    with pytest.raises(DomainError):
        sample_conditioned(0.0, 1.0, 1e-3, 0)
    with pytest.raises(DomainError):
        sample_conditioned(1.0, -1.0, 1e-3, 0)
    with pytest.raises(PreconditionError):
        sample_conditioned(1.0, 1.0, 1e-2, 0)


def test_conditioned_dominates_drifted_bm():
    # P(conditioned_1 <= 1) <= P(B_1 + 1 <= 1) = 1/2
    x = conditioned_marginal(1.0, 1.0, 5000, seed=7)
    p = np.mean(x <= 1.0)
    assert p <= 0.5 + 3 * math.sqrt(0.25 / x.size)


def test_conditioned_vs_rejection_and_htransform():
    w = conditioned_marginal(1.0, 1.0, 10_000, seed=1, method="williams")
    r = conditioned_marginal(1.0, 1.0, 10_000, seed=2, method="rejection")
    h = conditioned_marginal(1.0, 1.0, 10_000, seed=3, method="htransform")
    assert sps.ks_2samp(w, r).statistic <= 0.02
    assert sps.ks_2samp(w, h).statistic <= 0.03


def test_beta_process():
    b = sample_beta(1.0, 2.0, 1e-3, seed=5)
    nT = int(round(2.0 / 1e-3))
    assert b.values[nT] == 0.0 and b.times[nT] == 0.0
    assert np.all(b.values[:nT] >= 0.0)
    assert b.times[0] == pytest.approx(-2.0) and b.times[-1] == pytest.approx(2.0)


def test_beta_positive_side_drift():
    T, m, n = 10.0, 1.0, 2000
    ends = np.array([sample_beta(m, T, 1e-3, seed=s).values[-1] for s in range(n)]) / T
    se = ends.std(ddof=1) / math.sqrt(n)
    assert abs(ends.mean() + m) <= 4 * se


def test_cone_horizon():
    assert cone_horizon(1.0, 1.0) == pytest.approx(8 * 6.9)
    assert cone_horizon(0.5, 3.75) == pytest.approx(4 * 6.9 / 1.875)
    assert cone_horizon(1.0, 1.0, lam=100.0) == pytest.approx(8 * 6.9 + math.log(100.0))


def test_cone_constant_unit_case():
    est = estimate_cone_constant(1.0, 1.0, n_paths=3000, seed=11)
    assert est.target == pytest.approx(1 / math.pi)
    assert abs(est.z_score) < 3
    assert est.stderr > 0 and est.n_paths == 3000


def test_cone_frozen_value():
    est = estimate_cone_constant(1.0, 1.0, n_paths=200, seed=2024, T=10.0)
    assert est.mean == pytest.approx(0.3349406243863585, rel=1e-12)


def test_cone_i_tilde_lambda_invariance():
    ests = [estimate_cone_constant(1.0, 1.0, f="I_tilde", n_paths=6000, seed=s, lam=lam)
            for s, lam in ((1, 1.0), (2, 10.0), (3, 100.0))]
    for e in ests:
        assert abs(e.z_score) < 3
    for a in ests:
        for b in ests:
            assert abs(a.mean - b.mean) < 3 * math.hypot(a.stderr, b.stderr)


def test_cone_horizon_extension_is_negligible():
    a = estimate_cone_constant(1.0, 1.0, n_paths=1000, seed=4)
    b = estimate_cone_constant(1.0, 1.0, n_paths=1000, seed=4, T=1.5 * a.params["T"])
    assert abs(a.mean - b.mean) < a.stderr


def test_cone_dt_refinement():
    a = estimate_cone_constant(1.0, 1.0, n_paths=1500, seed=6, dt=1e-3)
    b = estimate_cone_constant(1.0, 1.0, n_paths=1500, seed=6, dt=5e-4)
    assert abs(a.mean - b.mean) < 2 * math.hypot(a.stderr, b.stderr)


def test_cone_custom_functional():
    @numba.njit
    def f(v):
        return v * math.exp(-v)

    est = estimate_cone_constant(1.0, 1.0, f=f, n_paths=1000, seed=9)
    assert est.target is None
    assert abs(est.mean - 1 / math.pi) < 4 * est.stderr


def test_cone_errors():
    with pytest.raises(DomainError):
        estimate_cone_constant(0.0, 1.0, n_paths=10)
    with pytest.raises(DomainError):
        estimate_cone_constant(1.0, -1.0, n_paths=10)
    with pytest.raises(DomainError):
        estimate_cone_constant(1.0, 1.0, f="nope", n_paths=10)


def test_cone_deterministic():
    a = estimate_cone_constant(0.5, 3.75, n_paths=300, seed=1)
    b = estimate_cone_constant(0.5, 3.75, n_paths=300, seed=1)
    assert a.mean == b.mean and a.stderr == b.stderr


def _inside_path(duration=0.02, steps=200, seed=0):
    p = sample_bridge2d((0.5, 0.5), duration, steps, seed)
    assert np.all((p.values > 0) & (p.values < 1))
    return p


def test_clock_flat_is_lebesgue_time():
    n = 31
    m = build_measure(GridField(GridSpec(n), np.zeros((n, n))), 0.0)
    p = _inside_path()
    assert liouville_clock(p, m) == pytest.approx(0.02, rel=1e-12)
    # points outside the square contribute nothing
    out = PathSample("bridge2d", 0.01, np.array([0.0, 0.01, 0.02]),
                     np.array([[1.5, 0.5], [0.5, 0.5], [0.5, 0.5]]))
    assert liouville_clock(out, m) == pytest.approx(0.01, rel=1e-12)


def test_clock_unit_density_gamma_half():
    n = 31
    gamma = 0.5
    m = build_measure(GridField(GridSpec(n), np.zeros((n, n))), gamma)
    a = 1 / (n + 1)
    assert liouville_clock(_inside_path(), m) == pytest.approx(0.02 * a ** (gamma**2 / 2), rel=1e-12)


def test_clock_additive():
    m = build_measure(sample_gff(GridSpec(31, seed=2)), 0.5)
    p = _inside_path(steps=200, seed=3)
    first = PathSample(p.kind, p.dt, p.times[:101], p.values[:101])
    second = PathSample(p.kind, p.dt, p.times[100:], p.values[100:])
    total = liouville_clock(p, m)
    assert total == pytest.approx(liouville_clock(first, m) + liouville_clock(second, m), rel=1e-13)


def test_clock_grid_mismatch():
    m = build_measure(sample_gff(GridSpec(31)), 0.5)
    with pytest.raises(GridMismatchError):
        liouville_clock(_inside_path(), m, discrete_green(GridSpec(15)))
