"""Stage I phase design and Stage II beamforming."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ris_ipac.beamforming import (build_model, composite_matrices, coordinate_ascent, identity_phase,
                                  objective_matrix, phase_objective, random_phase, run_two_stage,
                                  stage1_continuous, stage1_discrete, stage1_weights,
                                  stage2_beamforming)
from ris_ipac.beamforming.stage2 import _required_scale, power_control
from ris_ipac.channel import assemble_channels, effective_channels
from ris_ipac.errors import InfeasibleConstraintsError, InvalidArgumentError
from ris_ipac.metrics import evaluate

from conftest import small_config


def _channels(seed=0, **kw):
    cfg = small_config(seed=seed, **kw)
    return cfg, assemble_channels(cfg)


def _exhaustive(Q, L):
    M = Q.shape[0]
    grid = np.exp(2j * np.pi * np.arange(L) / L)
    return max(phase_objective(Q, grid[list(lv)]) / M for lv in itertools.product(range(L), repeat=M))


# --- Stage I -------------------------------------------------------------------

def test_composite_matrices_reproduce_reflected_gain(rng):
    cfg, ch = _channels(1)
    v = np.exp(2j * np.pi * rng.random(ch.n_ris))
    for k, n in itertools.product(range(ch.n_ue), range(ch.n_sub)):
        C, A = composite_matrices(ch, k, n)
        assert C.shape == (ch.n_ris, cfg.bs.n_elements)
        row = np.conj(ch.h_ris_ue[n, k]) @ np.diag(v) @ ch.g_bs_ris[n]
        np.testing.assert_allclose(v @ C, row, rtol=1e-12)
        assert np.isclose(v @ A @ np.conj(v), np.vdot(row, row), rtol=1e-12)
        np.testing.assert_allclose(A, np.conj(A).T)


@pytest.mark.parametrize("rate, expected", [([1.0, 2.0], [1.0, 1 / 3]), ([1.0, 0.0], [1.0, 0.0]),
                                            ([0.0, 0.0], [1.0, 1.0])])
def test_stage1_weights(rate, expected):
    np.testing.assert_allclose(stage1_weights(rate), expected)


def test_objective_matrix_sums_weighted_gains(rng):
    _, ch = _channels(2)
    inv = np.array([0.5, 2.0])
    Q = objective_matrix(ch, inv)
    v = np.exp(2j * np.pi * rng.random(ch.n_ris))
    direct = sum(inv[k] * np.real(v @ composite_matrices(ch, k, n)[1] @ np.conj(v))
                 for k in range(2) for n in range(ch.n_sub))
    assert np.isclose(phase_objective(Q, np.conj(v)), direct, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.sampled_from([2, 4, 8]))
def test_coordinate_ascent_never_decreases(seed, M, L):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    Q = A @ A.conj().T
    levels, obj, trace, sweeps = coordinate_ascent(Q, L, rng.integers(0, L, M))
    assert np.all(np.diff(trace) >= -1e-12 * max(1.0, abs(trace[-1])))
    assert obj == trace[-1] and np.all((0 <= levels) & (levels < L))


def test_discrete_single_element_is_constant(rng):
    _, ch = _channels(3, ris=(1, 1))
    prof = stage1_discrete(ch, np.ones(2), 4, 3, rng)
    Q = objective_matrix(ch, np.ones(2))
    assert np.isclose(prof.objective, Q[0, 0].real, rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_discrete_matches_exhaustive(seed):
    _, ch = _channels(seed, ris=(3, 1))
    rng = np.random.default_rng(seed)
    prof = stage1_discrete(ch, np.ones(2), 2, 4, rng)
    Q = objective_matrix(ch, np.ones(2))
    assert prof.objective >= _exhaustive(Q, 2) * (1 - 1e-9)
    assert prof.levels.shape == (3,) and prof.n_levels == 2
    np.testing.assert_allclose(np.abs(prof.v), 1 / np.sqrt(3), atol=1e-12)


def test_discrete_rejects_one_level(rng):
    _, ch = _channels()
    with pytest.raises(InvalidArgumentError):
        stage1_discrete(ch, np.ones(2), 1, 1, rng)


@pytest.mark.parametrize("seed", range(5))
def test_continuous_bound_and_unit_modulus(seed):
    _, ch = _channels(seed, ris=(2, 2))
    rng = np.random.default_rng(seed)
    inv = np.ones(2)
    Q = objective_matrix(ch, inv)
    prof = stage1_continuous(ch, inv, rng)
    M = ch.n_ris
    assert np.abs(np.abs(prof.v) - 1 / np.sqrt(M)).max() <= 1e-9
    assert prof.objective <= prof.sdr_bound * (1 + 1e-7)
    assert np.isclose(prof.objective, phase_objective(Q, prof.v), rtol=1e-10)
    rand = max(phase_objective(Q, random_phase(M, rng).v) for _ in range(100))
    assert prof.objective >= rand * (1 - 1e-9)
    fine = stage1_discrete(ch, inv, 64, 4, rng)
    assert prof.objective >= fine.objective * 0.99


def test_continuous_zero_objective_gives_uniform_phase(rng):
    _, ch = _channels()
    prof = stage1_continuous(ch, np.zeros(2), rng)
    np.testing.assert_allclose(prof.v, np.ones(ch.n_ris) / np.sqrt(ch.n_ris))
    assert prof.sdr_bound == 0.0


def test_fixed_profiles():
    assert identity_phase(4).mode == "identity"
    prof = random_phase(5, np.random.default_rng(0))
    np.testing.assert_allclose(np.abs(prof.v), 1 / np.sqrt(5))
    assert np.all((prof.phases >= 0) & (prof.phases < 2 * np.pi))


# --- Stage II ------------------------------------------------------------------

@pytest.mark.parametrize("rate", [0.5, 1.0, 3.0])
def test_mrt_closed_form(rate):
    cfg = small_config(n_ue=1, n_sub=1, rate_req=rate)
    ch = assemble_channels(cfg)
    phase = identity_phase(ch.n_ris)
    beams = stage2_beamforming(cfg, ch, phase, np.random.default_rng(0))
    g = effective_channels(ch, phase.v, cfg.obstruction)[0, 0]
    expected = (2**rate - 1) * cfg.noise_power / np.vdot(g, g).real
    assert abs(beams.total_power - expected) <= 1e-4 * expected
    w = beams.w[0, 0]
    assert abs(abs(np.vdot(g, w)) / (np.linalg.norm(g) * np.linalg.norm(w)) - 1) < 1e-6


def test_no_constraints_means_no_power():
    cfg = small_config(rate_req=0.0)
    ch = assemble_channels(cfg)
    beams = stage2_beamforming(cfg, ch, identity_phase(ch.n_ris), np.random.default_rng(0))
    assert beams.total_power == 0.0 and beams.sdr_gap == 0.0


@pytest.mark.parametrize("mode", ["continuous", "discrete", "random"])
@pytest.mark.parametrize("seed", [0, 1])
def test_two_stage_meets_requirements(mode, seed):
    cfg = small_config(seed=seed, n_sub=3, rate_req=[1.0, 0.5], peb_threshold=5e3, phase_mode=mode)
    phase, beams, report = run_two_stage(cfg)
    assert np.all(report.rate >= cfg.rate_req - 1e-3)
    assert np.all(report.peb <= cfg.peb_threshold * (1 + 1e-3))
    assert beams.sdr_power <= beams.total_power
    assert np.isclose(report.power_w, beams.total_power)
    again = evaluate(cfg, assemble_channels(cfg), phase, beams.w)
    np.testing.assert_array_equal(again.rate, report.rate)


def test_two_stage_is_deterministic():
    cfg = small_config(seed=4, rate_req=[1.0, 1.0], peb_threshold=5e3)
    a, b = run_two_stage(cfg), run_two_stage(cfg)
    np.testing.assert_array_equal(a[1].w, b[1].w)
    np.testing.assert_array_equal(a[0].v, b[0].v)


def test_power_cap_reports_binding_family():
    cfg = small_config(rate_req=[1.0, 1.0], max_power_w=1e-12)
    ch = assemble_channels(cfg)
    with pytest.raises(InfeasibleConstraintsError) as exc:
        stage2_beamforming(cfg, ch, identity_phase(ch.n_ris), np.random.default_rng(0))
    assert exc.value.binding and {f for f, _ in exc.value.binding} <= {"rate", "peb", "power"}


def test_power_control_reduces_power():
    # one UE, so no interference balance is lost when powers move
    cfg = small_config(n_ue=1, seed=6, n_sub=3, rate_req=1.0, peb_threshold=3e3)
    ch = assemble_channels(cfg)
    model = build_model(cfg, ch, identity_phase(ch.n_ris))
    # a feasible design with its beam powers pushed far from optimal
    beams = stage2_beamforming(cfg, ch, identity_phase(ch.n_ris), np.random.default_rng(0))
    w = beams.w / np.linalg.norm(beams.w, axis=-1, keepdims=True)
    s = _required_scale(model, w)
    assert np.isfinite(s)
    base = s**2 * np.sum(np.abs(w) ** 2)
    out = power_control(model, w, base / w[..., 0].size)
    assert out is not None
    s2 = _required_scale(model, out)
    refined = s2**2 * np.sum(np.abs(out) ** 2)
    assert np.isfinite(s2) and refined < 0.9 * base
    assert refined >= beams.sdr_power * (1 - 1e-6)
    # beam directions are kept
    cos = np.abs(np.sum(np.conj(w) * out, -1)) / (np.linalg.norm(w, axis=-1) * np.linalg.norm(out, axis=-1))
    np.testing.assert_allclose(cos[np.linalg.norm(out, axis=-1) > 0], 1.0, atol=1e-9)
