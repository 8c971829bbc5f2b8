"""Sampling genealogies of multitype continuous-state branching processes.

The main entry points:

* :class:`BranchingMechanism` and :func:`solve_u` for the Laplace exponent and
  its lambda-derivatives;
* :func:`enumerate_forests`, :func:`partition_function` and
  :func:`forest_law_P` for ancestral forests of a sample;
* :func:`mrca_probability` and :func:`mixture_identity_mc` for Poissonized
  sampling;
* :func:`merger_rate`, :func:`small_time_verify` and
  :func:`simulate_typed_coalescent` for the local coalescent picture;
* :mod:`csbp_genealogy.discrete` and :mod:`csbp_genealogy.particles` as
  independent oracles.
"""

from .coalescent import (RateTable, bolthausen_sznitman_rates, kingman_rates, lambda_psi_rate,
                         merger_rate, simulate_typed_coalescent, small_time_verify)
from .errors import (CSBPError, ContractError, DomainError, IntegrationError, NumericalError,
                     QuadratureError, SizeCapError)
from .fixtures import resolve_mechanism
from .forests import (LabeledForest, MarkedProcessLaw, count_forests, enumerate_forests,
                      partition_function)
from .jets import JetSpace, TaylorJet, jet_space
from .laplace import LaplaceSolution, SolutionProvider, semigroup_defect, solve_u
from .mechanism import (Atom, BranchingMechanism, JumpMeasure, NeveuMechanism, StableDensity,
                        mechanism_from_json)
from .poissonize import (forest_law_P, gamma_factorial_check, gamma_identity_check,
                         mixture_identity_mc, mrca_probability, sample_survival_probability)
from .quadrature import QuadratureSpec, integrate_pi_k

__version__ = "0.1.0"

__all__ = [
    "Atom", "BranchingMechanism", "JumpMeasure", "NeveuMechanism", "StableDensity",
    "mechanism_from_json", "resolve_mechanism",
    "JetSpace", "TaylorJet", "jet_space",
    "LaplaceSolution", "SolutionProvider", "semigroup_defect", "solve_u",
    "QuadratureSpec", "integrate_pi_k",
    "LabeledForest", "MarkedProcessLaw", "count_forests", "enumerate_forests", "partition_function",
    "forest_law_P", "gamma_factorial_check", "gamma_identity_check", "mixture_identity_mc",
    "mrca_probability", "sample_survival_probability",
    "RateTable", "bolthausen_sznitman_rates", "kingman_rates", "lambda_psi_rate", "merger_rate",
    "simulate_typed_coalescent", "small_time_verify",
    "CSBPError", "ContractError", "DomainError", "IntegrationError", "NumericalError",
    "QuadratureError", "SizeCapError",
]
