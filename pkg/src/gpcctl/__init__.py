"""Intrusive gPC propagation and perturbational HJB control of uncertain ODEs."""

from .orthopoly import Basis, DistributionFamily, build_basis, eval_basis, inner_product, project_function
from .galerkin import AugmentedSystem, augment, assemble, build_E, expand_random_matrix, project_polynomial_field, reconstruct_moments, sample_realization
from .hjb import ControlLaw, CostSpec, ValueSeries, chebyshev_bound, design_controller, jacobian_spectrum, l_function, lift_weights, solve_riccati, solve_value_terms, synthesize_control

__all__ = [
    "Basis", "DistributionFamily", "build_basis", "eval_basis", "inner_product", "project_function",
    "AugmentedSystem", "augment", "assemble", "build_E", "expand_random_matrix", "project_polynomial_field",
    "reconstruct_moments", "sample_realization",
    "ControlLaw", "CostSpec", "ValueSeries", "chebyshev_bound", "design_controller", "jacobian_spectrum",
    "l_function", "lift_weights", "solve_riccati", "solve_value_terms", "synthesize_control",
]
