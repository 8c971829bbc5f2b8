"""A branching particle system that converges to the CSBP.

Particles of mass 1/n split or die at rate beta n; atoms of the jump measure
become multi-offspring events.  The total mass stays a martingale, and the
genealogy is recorded so that sampled particles can be traced to time 0.
"""

import numpy as np

from csbp_genealogy import solve_u
from csbp_genealogy.fixtures import atom2
from csbp_genealogy.particles import mass_samples, simulate

mech = atom2()

# One run, with ancestors recorded at t = 0.5
term = simulate(mech, [1.0, 2.0], 1.0, 50, seed=7, mesh=[0.5])
print(f"{len(term.types)} particles at T, mass by type {term.mass(2)}")
print(f"{len(np.unique(term.roots))} founders still represented")
print(f"{len(np.unique(term.snapshots[0.5]))} distinct ancestors at t = 0.5")

# Mean mass over replicas; the exact mean is sum_i x_i du_i/dlambda_j at lambda = 0
x = np.array([1.0, 2.0])
Z = mass_samples(mech, x, 0.5, 30, 300, seed=1)
sol = solve_u(mech, 0.5, [0.0, 0.0], 1)
exact = [x @ [sol.derivative(i, (1, 0) if j == 0 else (0, 1)) for i in range(2)] for j in range(2)]
print(f"mean mass {Z.mean(axis=0)} +- {Z.std(axis=0) / np.sqrt(len(Z))}")
print(f"exact     {np.array(exact)}")
