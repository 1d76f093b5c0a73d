"""Sample a lattice free field, exponentiate it into a random area measure, and check it.

Run with ``python3 demos/01_field_and_measure.py``.
"""

import math

import numpy as np

from lqgspec.field import GridSpec, discrete_green, sample_gff, sample_gff_many
from lqgspec.gmc import build_measure, expected_mass, region_mass

spec = GridSpec(127, seed=1)
field = sample_gff(spec)
print(f"field on a {spec.n}x{spec.n} interior grid, spacing a = {spec.spacing:.5f}")
print(f"  pointwise variance near the centre ~ {field.values[60:68, 60:68].var():.3f}"
      f" (grows like log(1/a) = {math.log(1 / spec.spacing):.3f} times 2 pi / (2 pi))")

for gamma in (0.0, 0.5, 1.0, 1.5):
    m = build_measure(field, gamma)
    left = region_mass(m, lambda x, y: x < 0.5)
    print(f"gamma = {gamma:.1f}: total mass {m.total:.4f}, left half {left / m.total:.3f} of it,"
          f" largest cell {m.mass.max() / m.total:.2e} of it")

# the expected cell mass is a lognormal mean, exp(gamma^2 G(v,v)/2) times the lattice weight
small = GridSpec(8, seed=21)
gamma = 0.5
fields = sample_gff_many(small, 50_000)
masses = small.spacing ** (2 + gamma**2 / 2) * np.exp(gamma * fields)
expect = expected_mass(discrete_green(small), gamma)
z = (masses.mean(0) - expect) / (masses.std(0, ddof=1) / math.sqrt(len(masses)))
print(f"lognormal mean check on 8x8 over 50000 fields: max |z| = {np.abs(z).max():.2f}")
