"""Monte Carlo for the cone constant and the Brownian-bridge maximum law.

Small path counts keep this to about a minute; the acceptance runs use 100000 paths.
Run with ``python3 demos/03_cone_and_bridges.py``.
"""

import math

from lqgspec.paths import bridge_max_exceedance, conditioned_marginal, estimate_cone_constant

# the three cases share seed 1, so their fluctuations are correlated
for gamma, m in ((1.0, 1.0), (0.5, 3.75), (1.5, 1.0)):
    est = estimate_cone_constant(gamma, m, n_paths=4000, seed=1)
    print(f"gamma={gamma}, m={m}: {est.mean:.4f} +- {est.stderr:.4f}, "
          f"closed form 1/(pi gamma m) = {est.target:.4f}, z = {est.z_score:+.2f}")

# the answer does not depend on the intensity lambda for the indicator functional
for lam in (1.0, 100.0):
    est = estimate_cone_constant(1.0, 1.0, f="I_tilde", lam=lam, n_paths=2000, seed=2)
    print(f"I_tilde at lambda={lam:g}: {est.mean:.4f} +- {est.stderr:.4f}")

# three independent samplers of the conditioned process at time 1
w = conditioned_marginal(1.0, 1.0, 4000, seed=1, method="williams")
h = conditioned_marginal(1.0, 1.0, 4000, seed=2, method="htransform")
print(f"conditioned process at t=1: mean {w.mean():.3f} (reversal) vs {h.mean():.3f} (h-transform)")

for c in bridge_max_exceedance([0.5, 1.0, 1.5], 1.0, steps=500, n_paths=20_000, seed=3):
    print(f"P(max bridge >= {c.level}) = {c.probability:.4f} +- {c.stderr:.4f},"
          f" exp(-2k^2) = {math.exp(-2 * c.level**2):.4f}")
