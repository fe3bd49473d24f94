"""Fisher information, position bounds, SINR and rate."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ris_ipac.channel import assemble_channels, effective_channels
from ris_ipac.errors import InvalidArgumentError, SingularInformationError
from ris_ipac.geometry import SPEED_OF_LIGHT
from ris_ipac.metrics import (MetricsReport, alpha_terms, crb_peb, delay_gradient, efim_closed_form,
                              efim_position, evaluate, fim_channel, fim_finite_difference,
                              fim_orthogonal, fim_relative_error, fisher_bundle, jacobian_upsilon,
                              path_amplitudes, sinr_all, sinr_rate, watts_to_dbm)
from ris_ipac.scenarios import build_scenario
from ris_ipac.selfcheck import fim_check

from conftest import random_beams, random_phase, small_config

NOISE = 1e-3


def _instance(seed, n_ue=2, n_sub=4, chi=1, ris=(2, 2)):
    cfg = small_config(n_ue=n_ue, n_sub=n_sub, ris=ris, seed=seed, obstruction=chi)
    ch = assemble_channels(cfg)
    rng = np.random.default_rng(seed)
    w = random_beams(rng, n_sub, n_ue, cfg.bs.n_elements, 1e3)
    v = random_phase(rng, ch.n_ris)
    return cfg, ch, w, v


# --- composite amplitudes -----------------------------------------------------

def test_alpha_zero_beams():
    cfg, ch, w, v = _instance(0)
    assert alpha_terms(ch, np.zeros_like(w), v, 0, 0) == (0j, 0j)


def test_alpha_summation_oracle():
    cfg, ch, w, v = _instance(3, n_ue=3)
    omega = 2 * np.pi * ch.n * ch.delta_f
    for k in range(3):
        for n in range(ch.n_sub):
            ad = sum(np.conj(ch.h_direct[n, k]) @ w[n, i] for i in range(3)) * np.exp(1j * omega[n] * ch.tau_d[k])
            row = np.conj(ch.h_ris_ue[n, k]) @ np.diag(v) @ ch.g_bs_ris[n]
            ar = sum(row @ w[n, i] for i in range(3)) * np.exp(1j * omega[n] * ch.tau_r[0, k])
            got = alpha_terms(ch, w, v, k, n)
            np.testing.assert_allclose(got, (ad, ar), rtol=1e-10)


def test_alpha_reflected_annihilated():
    cfg, ch, w, v = _instance(1, n_ue=1)
    # beam orthogonal to the BS->RIS departure direction kills the reflected leg
    G = ch.g_bs_ris[0]
    _, _, vh = np.linalg.svd(G)
    w0 = np.zeros_like(w)
    w0[0, 0] = np.conj(vh[-1])
    _, ar = alpha_terms(ch, w0, v, 0, 0)
    ad, _ = path_amplitudes(ch, w0, v, 0)
    assert abs(ar) <= 1e-12 * np.abs(ch.g_bs_ris).max() and abs(ad[0, 0]) > 0


# --- channel FIM ----------------------------------------------------------------

def test_fim_chi_zero_kills_direct_delay():
    J = fim_channel(np.ones(3), 2 * np.ones(3), 0, 1e-7, 2e-7, np.arange(1, 4), 1e5, NOISE)
    np.testing.assert_array_equal(J[0], 0.0)
    np.testing.assert_array_equal(J[:, 0], 0.0)
    assert J[1, 1] > 0


def test_fim_hand_value():
    df = 120e3
    alpha = np.sqrt(NOISE / 2)
    J = fim_channel(np.array([alpha]), np.array([0.0]), 1, 1e-7, 2e-7, np.array([1]), df, NOISE)
    assert np.isclose(J[0, 0], (2 * np.pi * df) ** 2, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0, 1]), st.integers(1, 3))
def test_fim_symmetric_psd_and_matches_finite_difference(seed, chi, parts):
    rng = np.random.default_rng(seed)
    N, B = 4, 2
    ad = rng.standard_normal((N, B)) + 1j * rng.standard_normal((N, B))
    ar = rng.standard_normal((parts, N, B)) + 1j * rng.standard_normal((parts, N, B))
    tau_r = 1e-7 * (1 + rng.random(parts))
    n = np.arange(1, N + 1)
    J = fim_channel(ad, ar, chi, 1e-7, tau_r, n, 1e5, NOISE)
    assert J.shape == (3 + 3 * parts,) * 2
    np.testing.assert_allclose(J, J.T, atol=0)
    assert np.linalg.eigvalsh(J).min() >= -1e-10 * np.trace(J)
    J_fd = fim_finite_difference(ad, ar, chi, 1e-7, tau_r, n, 1e5, NOISE)
    assert fim_relative_error(J, J_fd) < 1e-4


def test_fim_relative_error_flags_dead_rows():
    ref = np.diag([1.0, 0.0])
    assert fim_relative_error(ref, ref) == 0.0
    assert fim_relative_error(np.array([[1.0, 0.1], [0.1, 0.0]]), ref) == np.inf


def test_fim_check_detects_wrong_spacing():
    cfg = build_scenario(1)
    assert fim_check(cfg, 3).passed
    assert not fim_check(cfg, 3, delta_f_error=1e-3).passed


def test_fim_check_single_subcarrier():
    res = fim_check(build_scenario(1, n_subcarriers=1), 2)
    assert np.isfinite(res.max_error) and res.passed


@pytest.mark.parametrize("chi, expected", [(1, [1, 1, 1, 1]), (0, [0, 0, 1, 1])])
def test_fim_orthogonal(chi, expected):
    J = fim_channel(np.ones(2), np.ones(2), chi, 1e-7, 2e-7, np.arange(1, 3), 1e5, NOISE)
    Jo = fim_orthogonal(J, chi)
    np.testing.assert_array_equal(np.diag(Jo)[2:], expected)
    assert Jo[1, 1] == J[1, 1] and np.count_nonzero(Jo - np.diag(np.diag(Jo))) == 0


def test_fim_off_diagonal_shrinks_with_bandwidth():
    def ratio(N):
        n = np.arange(1, N + 1)
        J = fim_channel(np.ones(N), 0.8 * np.ones(N), 1, 1.0e-7, 1.37e-7, n, 120e3, NOISE)
        return abs(J[0, 1]) / np.sqrt(J[0, 0] * J[1, 1])

    assert ratio(64) < ratio(4)


# --- Jacobian -----------------------------------------------------------------

def test_delay_gradient_norm_and_axis():
    g = delay_gradient([5.0, 1.0, -2.0], [0.0, 0.0, 0.0], 3)
    assert np.isclose(np.linalg.norm(g), 1 / SPEED_OF_LIGHT, rtol=1e-14)
    np.testing.assert_allclose(delay_gradient([7.0, 0, 0], [2.0, 0, 0], 2), [1 / SPEED_OF_LIGHT, 0.0])
    with pytest.raises(InvalidArgumentError):
        delay_gradient([1, 1, 1], [1, 1, 1])


@given(st.lists(st.floats(-40, 40), min_size=9, max_size=9))
def test_jacobian_matches_finite_difference(xs):
    u, p, r = np.array(xs[:3]), np.array(xs[3:6]), np.array(xs[6:])
    if min(np.linalg.norm(u - p), np.linalg.norm(u - r)) < 1.0:
        return
    U = jacobian_upsilon(u, p, r, 3)
    h = 1e-4
    for col, anchor in ((0, p), (1, r)):
        fd = [(np.linalg.norm(u + h * e - anchor) - np.linalg.norm(u - h * e - anchor)) / (2 * h * SPEED_OF_LIGHT)
              for e in np.eye(3)]
        assert np.abs(U[:3, col] - fd).max() <= 1e-6 * np.linalg.norm(fd)
    np.testing.assert_array_equal(U[3:, 2:], np.eye(4))
    np.testing.assert_array_equal(U[3:, :2], 0.0)


def test_jacobian_shape_with_parts():
    U = jacobian_upsilon([30, 2, 1.5], [0, 0, 10], np.array([[20, 20, 9], [20, 20, 10], [20, 20, 11]]), 2)
    assert U.shape == (2 + 8, 4 + 8)


# --- EFIM -----------------------------------------------------------------------

def test_efim_block_diagonal_schur():
    J = np.diag([4.0, 9.0, 1.0, 1.0, 1.0, 1.0])
    U = jacobian_upsilon([30, 2, 1.5], [0, 0, 10], [20, 20, 10], 2)
    U[:2, 2:] = 0.0
    res = efim_position(J, U)
    np.testing.assert_allclose(res.efim, res.j_loc[:2, :2], rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0, 1]))
def test_two_routes_agree(seed, chi):
    cfg, ch, w, v = _instance(seed % 1000, n_ue=2, chi=chi)
    for k in range(2):
        fb = fisher_bundle(ch, w, v, k, chi, cfg.noise_power, 2)
        assert np.abs(fb.efim - (chi * fb.j_d + fb.j_r)).max() <= 1e-9 * np.abs(fb.efim).max()
        assert np.linalg.eigvalsh(fb.j_loc).min() >= -1e-10 * np.trace(fb.j_loc)
        assert (chi == 0) == bool(fb.dropped)


def test_efim_trace_matches_full_inverse():
    cfg, ch, w, v = _instance(11, n_ue=1)
    fb = fisher_bundle(ch, w, v, 0, 1, cfg.noise_power, 2, approximate=False)
    # equilibrate first; the raw entries span more than twenty decades
    d = np.sqrt(np.diag(fb.j_loc))
    scaled = fb.j_loc / np.outer(d, d)
    full = np.linalg.inv(scaled) / np.outer(d, d)
    rtol = 10 * np.linalg.cond(scaled) * np.finfo(float).eps
    assert np.isclose(np.trace(np.linalg.inv(fb.efim)), np.trace(full[:2, :2]), rtol=rtol)


def test_efim_zero_and_homogeneity():
    cfg, ch, w, v = _instance(5)
    _, _, F0 = efim_closed_form(ch, np.zeros_like(w), v, 0, 1, cfg.noise_power)
    np.testing.assert_array_equal(F0, 0.0)
    _, _, F1 = efim_closed_form(ch, w, v, 0, 1, cfg.noise_power)
    _, _, F2 = efim_closed_form(ch, 2 * w, v, 0, 1, cfg.noise_power)
    np.testing.assert_allclose(F2, 4 * F1, rtol=1e-12)


def test_efim_monotone_in_added_power(rng):
    cfg, ch, w, v = _instance(6)
    for k in range(2):
        _, _, F = efim_closed_form(ch, w, v, k, 1, cfg.noise_power)
        w2 = w.copy()
        w2[1, 0] += random_beams(rng, 1, 1, cfg.bs.n_elements)[0, 0]
        J = fim_channel(*path_amplitudes(ch, w, v, k), 1, ch.tau_d[k], ch.tau_r[:, k], ch.n, ch.delta_f, 1.0)
        J2 = fim_channel(*path_amplitudes(ch, np.concatenate([w, w2[:, :1]], 1), v, k), 1,
                         ch.tau_d[k], ch.tau_r[:, k], ch.n, ch.delta_f, 1.0)
        assert np.all(np.diag(J2)[:2] >= np.diag(J)[:2])


def test_global_phase_invariance(rng):
    cfg, ch, w, v = _instance(7, n_ue=3)
    rot = w * np.exp(1j * rng.uniform(0, 2 * np.pi, w.shape[:2]))[..., None]
    a = evaluate(cfg, ch, v, w)
    b = evaluate(cfg.replace(peb_threshold=np.full(3, np.inf)), ch, v, rot)
    np.testing.assert_allclose(a.rate, b.rate, rtol=1e-12)
    # inverting the 2x2 EFIM costs up to cond * eps in relative accuracy
    np.testing.assert_allclose(a.peb, b.peb, rtol=10 * a.efim_cond.max() * np.finfo(float).eps)


def test_peb_scales_inversely():
    cfg, ch, w, v = _instance(8)
    a, b = evaluate(cfg, ch, v, w), evaluate(cfg, ch, v, 3 * w)
    np.testing.assert_allclose(b.peb, a.peb / 3, rtol=10 * a.efim_cond.max() * np.finfo(float).eps)


# --- CRB / PEB ------------------------------------------------------------------

def test_crb_identity():
    b = crb_peb(np.eye(2))
    assert b.crb == 2.0 and np.isclose(b.peb, np.sqrt(2)) and b.deficiency == 0


def test_crb_pseudo_and_strict():
    b = crb_peb(np.diag([4.0, 0.0]), "pseudo")
    assert b.crb == 0.25 and b.deficiency == 1
    with pytest.raises(SingularInformationError) as exc:
        crb_peb(np.diag([4.0, 0.0]), "strict")
    np.testing.assert_allclose(np.abs(exc.value.directions[:, 0]), [0, 1])
    with pytest.raises(InvalidArgumentError):
        crb_peb(np.eye(2), "other")


# --- SINR / rate ----------------------------------------------------------------

def test_single_user_sinr():
    cfg, ch, w, v = _instance(9, n_ue=1)
    g = effective_channels(ch, v, cfg.obstruction)
    gamma, rate = sinr_rate(ch, w, v, cfg.obstruction, cfg.noise_power, 0)
    expected = np.sum(np.abs(np.einsum("nt,nt->n", np.conj(g[:, 0]), w[:, 0])) ** 2) / cfg.noise_power
    assert np.isclose(gamma, expected, rtol=1e-12) and np.isclose(rate, np.log2(1 + expected))


@pytest.mark.parametrize("gamma, rate", [(1.0, 1.0), (3.0, 2.0)])
def test_rate_log_identity(gamma, rate):
    assert np.log2(1 + gamma) == rate


def test_sinr_accumulation_oracle():
    cfg, ch, w, v = _instance(10, n_ue=3)
    chi = np.array([1, 0, 1])
    got = sinr_all(ch, w, v, chi, cfg.noise_power)
    for k in range(3):
        sig = intf = 0.0
        for n in range(ch.n_sub):
            row = chi[k] * np.conj(ch.h_direct[n, k]) + np.conj(ch.h_ris_ue[n, k]) @ np.diag(v) @ ch.g_bs_ris[n]
            for i in range(3):
                p = abs(row @ w[n, i]) ** 2
                if i == k:
                    sig += p
                else:
                    intf += p
        assert np.isclose(got[k], sig / (intf + cfg.noise_power), rtol=1e-10)


def test_report_invariants_and_dbm():
    cfg, ch, w, v = _instance(12, n_ue=2)
    rep = evaluate(cfg, ch, v, w)
    np.testing.assert_allclose(rep.rate, np.log2(1 + rep.sinr), rtol=1e-12)
    np.testing.assert_allclose(rep.peb, np.sqrt(rep.crb), rtol=1e-12)
    assert np.isclose(rep.power_dbm, 10 * np.log10(rep.power_w * 1000))
    assert len(rep.to_row()) == len(rep.csv_header())
    assert isinstance(rep, MetricsReport) and rep.to_dict()["ue"][0]["efim_rank"] == 2
    assert watts_to_dbm(1.0) == 30.0


def test_blocked_single_anchor_is_singular():
    cfg = build_scenario(3, ris_parts=1)
    ch = assemble_channels(cfg)
    w = random_beams(np.random.default_rng(0), ch.n_sub, ch.n_ue, ch.n_tx)
    with pytest.raises(SingularInformationError) as exc:
        evaluate(cfg, ch, np.ones(ch.n_ris) / np.sqrt(ch.n_ris), w)
    assert exc.value.ue == 0
