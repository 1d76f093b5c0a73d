import math

import numpy as np
import pytest

from lqgspec.errors import DomainError, EmptyRegionError, GridMismatchError
from lqgspec.field import GridField, GridSpec, discrete_green, sample_gff, sample_gff_many
from lqgspec.gmc import LiouvilleMeasure, build_measure, expected_mass, region_mask, region_mass


def test_flat_measure():
    m = build_measure(GridField(GridSpec(3), np.random.default_rng(0).normal(size=(3, 3))), 0.0)
    assert np.all(m.mass == 0.0625)
    assert m.total == 9 / 16


def test_single_cell_value():
    m = build_measure(GridField(GridSpec(1), np.ones((1, 1))), 0.5)
    assert m.mass[0, 0] == pytest.approx(0.5**2.125 * math.exp(0.5), rel=1e-14)
    assert m.mass[0, 0] == pytest.approx(0.37797, abs=5e-5)


@pytest.mark.parametrize("gamma", [-0.1, 2.0, 2.5])
def test_gamma_domain(gamma):
    with pytest.raises(DomainError):
        build_measure(sample_gff(GridSpec(3)), gamma)


def test_total_is_correctly_rounded():
    m = build_measure(sample_gff(GridSpec(64, seed=3)), 1.5)
    assert m.total == math.fsum(m.mass.ravel())
    assert region_mass(m, np.ones((64, 64), bool)) == m.total


def test_region_mass_additivity_and_halves():
    spec = GridSpec(10)
    flat = build_measure(GridField(spec, np.zeros((10, 10))), 0.0)
    assert region_mass(flat, lambda x, y: x < 0.5) == flat.total / 2
    m = build_measure(sample_gff(spec.with_seed(2)), 0.7)
    A = lambda x, y: (x < 0.3) & (y < 0.6)
    B = lambda x, y: x > 0.7
    union = lambda x, y: A(x, y) | B(x, y)
    assert region_mass(m, union) == pytest.approx(region_mass(m, A) + region_mass(m, B), rel=1e-15)


def test_region_errors():
    m = build_measure(sample_gff(GridSpec(4)), 0.5)
    with pytest.raises(EmptyRegionError):
        region_mass(m, lambda x, y: x > 2)
    with pytest.raises(GridMismatchError):
        region_mask(m.spec, np.ones((3, 3), bool))


def test_shift_scales_masses():
    f = sample_gff(GridSpec(8, seed=1))
    c, gamma = 0.37, 0.9
    m0 = build_measure(f, gamma)
    m1 = build_measure(GridField(f.spec, f.values + c), gamma)
    np.testing.assert_allclose(m1.mass, m0.mass * math.exp(gamma * c), rtol=1e-14)


def test_from_masses_checks():
    with pytest.raises(DomainError):
        LiouvilleMeasure.from_masses(GridSpec(2), 0.5, np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(GridMismatchError):
        LiouvilleMeasure.from_masses(GridSpec(2), 0.5, np.ones((3, 3)))


def test_lognormal_mean_identity():
    gamma = 0.5
    spec = GridSpec(8, seed=21)
    fields = sample_gff_many(spec, 100_000)
    a = spec.spacing
    masses = a ** (2 + gamma**2 / 2) * np.exp(gamma * fields)
    expected = expected_mass(discrete_green(spec), gamma)
    for v in [(0, 0), (3, 4), (7, 2)]:
        x = masses[:, v[0], v[1]]
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - expected[v]) <= 4 * se
    tot = masses.sum(axis=(1, 2))
    assert abs(tot.mean() - expected.sum()) <= 4 * tot.std(ddof=1) / math.sqrt(tot.size)
