"""End-to-end two-stage design: RIS phases, then beamformers, then metrics."""
import numpy as np

from ..channel import assemble_channels
from ..errors import InvalidArgumentError
from ..metrics import evaluate
from .phase import identity_phase, random_phase, stage1_continuous, stage1_discrete, stage1_weights
from .stage2 import stage2_beamforming


def stage_rngs(seed):
    """Independent generators for Stage I and Stage II derived from ``seed``."""
    s1, s2 = np.random.SeedSequence(int(seed) % 2**64).spawn(2)
    return np.random.default_rng(s1), np.random.default_rng(s2)


def run_stage1(cfg, channels, rng):
    parts = channels.part_index if channels.n_parts > 1 else None
    M = channels.n_ris
    if cfg.phase_mode == "discrete":
        inv_beta = stage1_weights(cfg.rate_req)
        return stage1_discrete(channels, inv_beta, cfg.n_levels, cfg.discrete_starts, rng, parts)
    if cfg.phase_mode == "continuous":
        inv_beta = stage1_weights(cfg.rate_req)
        return stage1_continuous(channels, inv_beta, rng, cfg.random_trials, parts)
    if cfg.phase_mode == "random":
        return random_phase(M, rng, parts)
    if cfg.phase_mode == "identity":
        return identity_phase(M, parts)
    raise InvalidArgumentError(f"unknown phase mode {cfg.phase_mode!r}")


def run_two_stage(cfg, channels=None):
    """Run both stages for ``cfg`` and evaluate the result.

    Returns ``(phase, beams, report)``. Deterministic given ``cfg.seed``.
    """
    cfg.validate()
    if channels is None:
        channels = assemble_channels(cfg)
    rng1, rng2 = stage_rngs(cfg.seed)
    phase = run_stage1(cfg, channels, rng1)
    beams = stage2_beamforming(cfg, channels, phase, rng2)
    diag = {
        "sdr_power_w": beams.sdr_power,
        "sdr_gap": beams.sdr_gap,
        "trials": beams.trials,
        "max_rank_ratio": float(np.max(beams.sdr_rank_ratios)) if beams.sdr_rank_ratios.size else 0.0,
        "phase_objective": float(phase.objective),
    }
    report = evaluate(cfg, channels, phase, beams.w, diag)
    return phase, beams, report
