"""Poissonization for a finite Galton-Watson population, checked in exact arithmetic.

A uniform k-sample can be generated by Bernoulli sampling with a random
inclusion probability.  We enumerate every outcome of a small two-type tree
and compare both sides of the identity as fractions.
"""

from csbp_genealogy.discrete import (bernoulli_identity_check, enumerate_population_law,
                                     shipped_events, shipped_models)

model = shipped_models()["two-type-flip"]
outcomes = enumerate_population_law(model)
print(f"{len(outcomes)} population outcomes")

# One line per event; lhs and rhs are Fractions
for chk in bernoulli_identity_check(outcomes, (1, 1), shipped_events(model.d)):
    print(f"{chk.event:<24} {str(chk.lhs):>20} {str(chk.rhs):>20}  equal={chk.lhs == chk.rhs}")
