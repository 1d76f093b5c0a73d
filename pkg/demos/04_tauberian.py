"""Laplace-transform asymptotics and the monotone differentiation sandwich.

Run with ``python3 demos/04_tauberian.py``.
"""

from lqgspec.asymptotics import asympdiff_check, tauberian_check, tauberian_log_ratio

for rho in (0.5, 1.0, 2.0):
    r = tauberian_check(rho)
    print(f"rho={rho}: max |ratio - 1| over lambda in 1e2..1e6 = {r.max_rel_dev:.1e}")

r = tauberian_check(0.5, density="log")
for lam, ratio in zip(r.grid, r.ratio):
    print(f"log density, lambda={lam:.0e}: ratio {ratio:.5f} (closed form {float(tauberian_log_ratio(0.5, lam)):.5f})")

for phi in ("decaying_wobble", "wobble"):
    r = asympdiff_check(2.0, 0.5, phi=phi)
    i = -1
    print(f"{phi}: t={r.grid[i]:.0e}, t^(a-b) phi(t) = {r.lhs[i]:.4f}, "
          f"envelope [{r.extra['lower'][i]:.4f}, {r.extra['upper'][i]:.4f}], target 0.5")
