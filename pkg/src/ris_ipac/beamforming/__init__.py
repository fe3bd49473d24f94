"""Two-stage RIS phase and transmit beamforming design."""
from .phase import (PhaseProfile, composite_matrices, coordinate_ascent, identity_phase,
                    objective_matrix, phase_objective, random_phase, stage1_continuous,
                    stage1_discrete, stage1_weights)
from .pipeline import run_stage1, run_two_stage, stage_rngs
from .stage2 import BeamSolution, build_model, efim_of, stage2_beamforming

__all__ = [
    "PhaseProfile", "composite_matrices", "coordinate_ascent", "identity_phase",
    "objective_matrix", "phase_objective", "random_phase", "stage1_continuous",
    "stage1_discrete", "stage1_weights", "run_stage1", "run_two_stage", "stage_rngs",
    "BeamSolution", "build_model", "efim_of", "stage2_beamforming",
]
