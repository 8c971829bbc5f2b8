"""Feller diffusion: how often does a sample of two share one founder?

For psi(l) = beta l^2 with beta = 1/2, started from mass 1 and observed at
T = 1, the answer has the closed form 1 - 3 e^{-2}.  We compute it three ways:
by quadrature over the mixing measure, from the particle oracle, and from the
closed form.
"""

import math

from csbp_genealogy import mrca_probability
from csbp_genealogy.fixtures import feller
from csbp_genealogy.particles import estimate_mrca

mech = feller(0.5)

# quadrature over lambda
quad = mrca_probability(2, 1.0, 1.0, mech)
print(f"quadrature   {quad.value:.10f}  (error estimate {quad.error:.1e})")
print(f"closed form  {1 - 3 * math.exp(-2):.10f}")

# particles of mass 1/n; the estimate drifts towards the limit like C/n
est = estimate_mrca(mech, [1.0], 1.0, 2, (50, 100, 200), 20_000, seed=1)
for row in est.rows:
    print(f"n={row.n:<4d}      {row.estimate:.4f} +- {row.stderr:.4f}")
print(f"fitted limit {est.intercept:.4f}, C = {est.bias_coefficient:.3f}")

# larger samples rarely coalesce into a single founder
for k in (2, 3, 5, 8):
    print(f"k={k}: {mrca_probability(k, 1.0, 1.0, mech).value:.6f}")
