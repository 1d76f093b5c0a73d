"""Eigenvalues of the random-measure Laplacian, the Weyl slope, spacings and the heat trace.

A 63x63 grid keeps this to well under a minute; the acceptance runs use 255x255.
Run with ``python3 demos/02_spectrum_and_weyl.py``.
"""

import numpy as np

from lqgspec.field import GridSpec, sample_gff
from lqgspec.gmc import build_measure
from lqgspec.heat import heat_trace, laplace_of_weighted_trace
from lqgspec.spectral import assemble_pair, solve_spectrum
from lqgspec.stats import C0, c_gamma, spacing_stats, weyl_fit

gamma = 0.5
m = build_measure(sample_gff(GridSpec(63, seed=1)), gamma)
spec = solve_spectrum(assemble_pair(m), 600, seed=1)
print(f"{spec.k} eigenvalues, lambda_1 = {spec.eigenvalues[0]:.3f}, lambda_k = {spec.eigenvalues[-1]:.1f}")

fit = weyl_fit(spec, gamma, m, window=(100, 600))
print(f"counting slope / mu(D) = {fit.slope / m.total:.4f}")
print(f"  c_gamma = {c_gamma(gamma):.4f} (ratio {fit.ratio:.3f}), flat c_0 = {C0:.4f}")

st = spacing_stats(spec, gamma, m, window=(100, 600))
print(f"mean unfolded gap {st.mean_gap:.3f}, KS distance to the Wigner surmise {st.ks_vs_wigner:.3f}")

ref = c_gamma(gamma) * m.total
curve = heat_trace(spec, np.logspace(-4, -1, 13))
print("     t      t S(t)/ref  resolved")
for t, r, ok in zip(curve.t, curve.tS / ref, curve.resolved):
    print(f"  {t:.2e}   {r:.3f}      {'yes' if ok else 'no'}")
for lam in (30.0, 100.0, 300.0):
    print(f"lambda = {lam:5.0f}: lambda sum (lambda + lambda_n)^-2 / ref = "
          f"{lam * laplace_of_weighted_trace(spec, lam) / ref:.3f}")
