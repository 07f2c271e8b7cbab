"""Finite-dimensional moment-map and Kempf-Ness sandbox for torus and SU(2) actions."""

from .actions import LinearAction, kempf_ness_h, moment_map, projective_moment, spin_matrices
from .descent import (BudgetExhausted, DescentResult, OrbitState, convexity_probe, gradient_identity_gap,
                      kempf_ness_descend, orbit_minimizer_agreement)
from .scenario import ScenarioError, load_scenario, run_scenario
from .stabilizer import (NotExtremalError, StabilizerError, extremal_decomposition, stabilizer_character)

__all__ = [
    "LinearAction", "moment_map", "projective_moment", "kempf_ness_h", "spin_matrices",
    "OrbitState", "DescentResult", "BudgetExhausted", "kempf_ness_descend", "convexity_probe",
    "gradient_identity_gap", "orbit_minimizer_agreement", "stabilizer_character", "extremal_decomposition",
    "StabilizerError", "NotExtremalError", "load_scenario", "run_scenario", "ScenarioError",
]
