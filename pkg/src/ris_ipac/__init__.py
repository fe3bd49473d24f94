"""RIS-enabled integrated positioning and communication.

Wideband geometric channels, time-of-arrival Fisher information and
position error bounds, and the two-stage minimum-power design (RIS
phases, then SDR transmit beamforming under rate and PEB constraints).
"""
from .beamforming import BeamSolution, PhaseProfile, run_two_stage, stage2_beamforming
from .channel import ChannelSet, assemble_channels, effective_channels, reflected_channels
from .config import SystemConfig, config_from_dict, config_to_dict, load_config, save_config
from .errors import (ConfigError, InfeasibleConstraintsError, InvalidArgumentError,
                     NoFeasibleCandidateError, RisIpacError, SingularInformationError, SolverError)
from .geometry import ArrayGeometry, steering_vector, upa_coordinates
from .metrics import MetricsReport, crb_peb, efim_closed_form, evaluate, fim_channel, sinr_rate
from .scenarios import SweepSpec, build_scenario, emit, partition_ris, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "BeamSolution", "ChannelSet", "ConfigError", "InfeasibleConstraintsError",
    "InvalidArgumentError", "MetricsReport", "NoFeasibleCandidateError", "PhaseProfile",
    "RisIpacError", "SingularInformationError", "SolverError", "SweepSpec", "SystemConfig",
    "assemble_channels", "build_scenario", "config_from_dict", "config_to_dict", "crb_peb",
    "effective_channels", "efim_closed_form", "emit", "evaluate", "fim_channel", "load_config",
    "partition_ris", "reflected_channels", "run_sweep", "run_two_stage", "save_config",
    "sinr_rate", "stage2_beamforming", "steering_vector", "upa_coordinates",
]
