"""Local coalescent rates from a branching mechanism.

psi(l) = l log l gives merger rates that do not depend on the population
size and coincide with the Bolthausen-Sznitman coalescent.  A Feller diffusion
gives Kingman pair mergers at rate 2 beta / x.
"""

from csbp_genealogy import RateTable, bolthausen_sznitman_rates, merger_rate, simulate_typed_coalescent
from csbp_genealogy.coalescent import first_event_frequencies
from csbp_genealogy.fixtures import feller, resolve_mechanism

neveu = resolve_mechanism("neveu")

# Same rates at every population size
for x in (0.1, 1.0, 10.0):
    rates = [merger_rate(neveu, [x], (4,), (j,), 0) for j in (2, 3, 4)]
    print(f"x={x:<5} " + "  ".join(f"{r:.6f}" for r in rates))

# Kingman: only pairs merge, faster in small populations
for x in (0.5, 1.0, 2.0):
    print(f"Feller x={x}: pair rate {merger_rate(feller(0.5), [x], (2,), (2,), 0):.4f}")

# First events of the simulator against the rate table
table = RateTable.from_data(bolthausen_sznitman_rates())
law = table.first_event_law((4,))
freq = first_event_frequencies(simulate_typed_coalescent(table, (4,), 20_000, seed=3, max_events=1), 20_000)
for key in sorted(law):
    print(f"merge {key[0]}: simulated {freq.get(key, 0.0):.4f}  analytic {law[key]:.4f}")
