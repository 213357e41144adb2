"""Cumulant-series engine for dual-hierarchy phase-density averages.

The package computes truncated cumulant (semi-invariant) series solutions for
averages of microscopic phase densities, realizes the associated flow,
scattering and functional-expansion operators as lazy pullbacks, and checks
everything against a brute-force many-particle ensemble evolved by molecular
dynamics.
"""

from ._kernels import ACTIVE_BACKEND
from .cumulants import (ClusterIndexSet, CumulantTerm, ExpansionOrderConfig,
                        SetPartition, apply_cumulant, apply_scattering_cumulant,
                        apply_V, apply_V_renormalized, bell_number,
                        cumulant_operator, cumulant_terms, enumerate_partitions,
                        expansion_operator, generator_check,
                        partition_identity_sum)
from .density import (L1Report, OneParticleDensity, QuadratureSpec,
                      gaussian_initial_data, kernel_peak, l1_norm,
                      mc_integrate, product_density)
from .dynamics import (FlowConfig, MacroPoint, PhasePoint, PotentialSpec,
                       flow_map, flow_map_batch, force_on, hamiltonian_energy,
                       pair_potential, pair_potential_grad)
from .operators import (OperatorContext, PhaseFunction, apply_S, apply_S_hat,
                        backward_flow_operator, check_symmetry, phase_sum,
                        scattering_operator, scattering_operator_composed)
from .oracle import (ComparisonReport, EmpiricalDensity, EnsembleConfig,
                     EnsembleState, compare_to_series, empirical_phase_density,
                     evolve_ensemble, oracle_density, sample_ensemble)
from .solver import (ConvergenceReport, FunctionalResult, ResidualReport,
                     SeriesConfig, SolutionTrace, THEOREM_THRESHOLD,
                     collision_integral, convergence_report,
                     functional_threshold, functional_values,
                     kinetic_residual, marginal_functional, series_mass,
                     series_term_l1, solve_series, solve_series_g1,
                     solve_series_gk, standard_probes, transport_residual,
                     transported_density, transport_pullback_factor)

__version__ = "0.1.0"
