"""Measurement apparatus for vortex fields, trajectories and measures."""

from .energetics import (ball_coverage, cutoff, equipartition_check, equipartition_constant, eta,
                         eta_atomic, excess_energy, KineticAccumulator, kinetic_comparison, localizer, stress_matrix,
                         time_average)
from .hodge import HodgeResult, current_difference, hodge_decompose, poisson
from .metric import AtomicSignedMeasure, transport_plan, w_minus_one_one
from .stress import AffineTest, BumpTimesAffine, stress_identity_check
from .tracking import TrackingResult, locate_vortices

__all__ = [
    "AffineTest", "AtomicSignedMeasure", "BumpTimesAffine", "HodgeResult", "TrackingResult",
    "ball_coverage", "current_difference", "cutoff", "equipartition_check",
    "equipartition_constant", "eta", "eta_atomic", "excess_energy", "hodge_decompose",
    "KineticAccumulator", "kinetic_comparison", "localizer", "locate_vortices", "poisson", "stress_identity_check",
    "stress_matrix", "time_average", "transport_plan", "w_minus_one_one",
]
