"""Wideband LoS / reflected channel assembly.

Every leg is a pure line-of-sight path with free-space amplitude
``lambda_n / (4 pi d)`` and one uniformly random phase per link. The
random phase is keyed on the seed and the link's end points, so it moves
with the UE when UEs are reordered.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .geometry import SPEED_OF_LIGHT, angles_to, split_rows, steering_vector, subcarrier_wavelength

_LINK_TAGS = {"direct": 1, "ris_ue": 2, "bs_ris": 3}


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier channels and the parameters they were built from.

    Conventions: ``h_direct[n, k]`` is the vector ``h`` such that the
    received direct-path term is ``h^H w``; likewise ``h_ris_ue``.
    ``g_bs_ris[n]`` is the M x Nt BS-to-RIS matrix. Reflected-path
    quantities carry a leading ``parts`` axis (length 1 for an
    unpartitioned RIS); ``part_index[j]`` selects sub-array ``j``'s RIS
    elements.
    """

    n: np.ndarray                # (N,) subcarrier indices 1..N
    wavelengths: np.ndarray      # (N,)
    delta_f: float
    h_direct: np.ndarray         # (N, K, Nt)
    h_ris_ue: np.ndarray         # (N, K, M)
    g_bs_ris: np.ndarray         # (N, M, Nt)
    tau_d: np.ndarray            # (K,)
    tau_r: np.ndarray            # (P, K)
    tau_g: np.ndarray            # (P,)
    phi_d: np.ndarray            # (K,)
    theta_d: np.ndarray          # (K,)
    phi_r: np.ndarray            # (P, K)
    theta_r: np.ndarray          # (P, K)
    phi_g: np.ndarray            # (P, 2) departure at BS, arrival at RIS
    theta_g: np.ndarray          # (P, 2)
    gain_d: np.ndarray           # (N, K)
    gain_r: np.ndarray           # (N, P, K)
    gain_g: np.ndarray           # (N, P)
    part_index: tuple            # P index arrays into the M RIS elements
    bs_position: np.ndarray      # (3,)
    ris_positions: np.ndarray    # (P, 3) sub-array reference points
    ue_positions: np.ndarray     # (K, 3)

    @property
    def n_sub(self):
        return self.h_direct.shape[0]

    @property
    def n_ue(self):
        return self.h_direct.shape[1]

    @property
    def n_tx(self):
        return self.h_direct.shape[2]

    @property
    def n_ris(self):
        return self.h_ris_ue.shape[2]

    @property
    def n_parts(self):
        return len(self.part_index)


def _link_phase(seed, tag, *points):
    words = np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in points])
    key = (_LINK_TAGS[tag],) + tuple(int(x) for x in words.view(np.uint32))
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=key)
    return float(np.random.default_rng(ss).uniform(0.0, 2.0 * np.pi))


def free_space_gain(wavelength, distance, phase):
    return wavelength / (4.0 * np.pi * distance) * np.exp(1j * phase)


def assemble_channels(cfg):
    """Build every channel leg for every subcarrier of ``cfg``.

    The obstruction flags are *not* applied here; metrics and the
    optimizer multiply the direct channel by them.
    """
    p = cfg.bs.reference_point
    ue = np.asarray(cfg.ue_positions, dtype=float)
    n = cfg.subcarriers
    lam = subcarrier_wavelength(cfg.fc, cfg.delta_f, n)
    omega = 2.0 * np.pi * n * cfg.delta_f
    n_sub, k_ue = len(n), ue.shape[0]

    if cfg.ris_parts > 1:
        parts = split_rows(cfg.ris, cfg.ris_parts)
    else:
        parts = [(np.arange(cfg.ris.n_elements), cfg.ris)]
    n_parts = len(parts)
    ris_pos = np.array([g.reference_point for _, g in parts])

    for i, u in enumerate(ue):
        if np.array_equal(u, p):
            raise InvalidArgumentError(f"UE {i + 1} is collocated with the BS")
        for r in ris_pos:
            if np.array_equal(u, r) or np.array_equal(u, cfg.ris.reference_point):
                raise InvalidArgumentError(f"UE {i + 1} is collocated with the RIS")

    # BS -> UE
    tau_d = np.linalg.norm(ue - p, axis=1) / SPEED_OF_LIGHT
    ang_d = np.array([angles_to(p, u) for u in ue]).reshape(k_ue, 2)
    phi_d, theta_d = ang_d[:, 0], ang_d[:, 1]
    gain_d = np.empty((n_sub, k_ue), complex)
    h_direct = np.empty((n_sub, k_ue, cfg.bs.n_elements), complex)
    for k in range(k_ue):
        psi = _link_phase(cfg.seed, "direct", p, ue[k])
        gain_d[:, k] = free_space_gain(lam, tau_d[k] * SPEED_OF_LIGHT, psi)
        a = steering_vector(cfg.bs, phi_d[k], theta_d[k], lam)       # (N, Nt)
        # h^H = g e^{-j w tau} a^H  =>  h = conj(g) e^{+j w tau} a
        h_direct[:, k] = (np.conj(gain_d[:, k]) * np.exp(1j * omega * tau_d[k]))[:, None] * a

    m_total = cfg.ris.n_elements
    h_ris_ue = np.zeros((n_sub, k_ue, m_total), complex)
    g_bs_ris = np.zeros((n_sub, m_total, cfg.bs.n_elements), complex)
    tau_r = np.empty((n_parts, k_ue))
    phi_r = np.empty((n_parts, k_ue))
    theta_r = np.empty((n_parts, k_ue))
    gain_r = np.empty((n_sub, n_parts, k_ue), complex)
    tau_g = np.empty(n_parts)
    phi_g = np.empty((n_parts, 2))
    theta_g = np.empty((n_parts, 2))
    gain_g = np.empty((n_sub, n_parts), complex)
    for j, (idx, sub) in enumerate(parts):
        r = sub.reference_point
        # BS -> RIS (rank one)
        d_g = np.linalg.norm(r - p)
        tau_g[j] = d_g / SPEED_OF_LIGHT
        phi_g[j, 0], theta_g[j, 0] = angles_to(p, r)
        phi_g[j, 1], theta_g[j, 1] = angles_to(r, p)
        gain_g[:, j] = free_space_gain(lam, d_g, _link_phase(cfg.seed, "bs_ris", p, r))
        a_bs = steering_vector(cfg.bs, phi_g[j, 0], theta_g[j, 0], lam)     # (N, Nt)
        a_ris = steering_vector(sub, phi_g[j, 1], theta_g[j, 1], lam)      # (N, Mj)
        scale = gain_g[:, j] * np.exp(-1j * omega * tau_g[j])
        g_bs_ris[:, idx, :] = scale[:, None, None] * a_ris[:, :, None] * np.conj(a_bs)[:, None, :]
        # RIS -> UE
        for k in range(k_ue):
            dist = np.linalg.norm(ue[k] - r)
            tau_r[j, k] = dist / SPEED_OF_LIGHT
            phi_r[j, k], theta_r[j, k] = angles_to(r, ue[k])
            gain_r[:, j, k] = free_space_gain(lam, dist, _link_phase(cfg.seed, "ris_ue", r, ue[k]))
            a = steering_vector(sub, phi_r[j, k], theta_r[j, k], lam)
            h_ris_ue[:, k, idx] = (np.conj(gain_r[:, j, k]) * np.exp(1j * omega * tau_r[j, k]))[:, None] * a

    return ChannelSet(
        n=n, wavelengths=lam, delta_f=float(cfg.delta_f),
        h_direct=h_direct, h_ris_ue=h_ris_ue, g_bs_ris=g_bs_ris,
        tau_d=tau_d, tau_r=tau_r, tau_g=tau_g,
        phi_d=phi_d, theta_d=theta_d, phi_r=phi_r, theta_r=theta_r,
        phi_g=phi_g, theta_g=theta_g,
        gain_d=gain_d, gain_r=gain_r, gain_g=gain_g,
        part_index=tuple(idx for idx, _ in parts),
        bs_position=p.copy(), ris_positions=ris_pos, ue_positions=ue.copy(),
    )


def effective_channels(channels, v, chi):
    """Composite vectors ``g_{n,k}`` with ``g^H = chi h_d^H + h_r^H diag(v) G``.

    Returns shape (N, K, Nt).
    """
    refl = reflected_channels(channels, v)
    return np.asarray(chi)[None, :, None] * channels.h_direct + refl.sum(axis=0)


def reflected_channels(channels, v):
    """Per-part reflected composite vectors ``(h_{r,j}^H diag(v_j) G_j)^H``.

    Returns shape (P, N, K, Nt).
    """
    v = np.asarray(v, complex)
    out = np.empty((channels.n_parts, channels.n_sub, channels.n_ue, channels.n_tx), complex)
    for j, idx in enumerate(channels.part_index):
        # row vector h_r^H diag(v) G  (N, K, Nt)
        hr = np.conj(channels.h_ris_ue[:, :, idx]) * v[idx][None, None, :]
        row = np.einsum("nkm,nmt->nkt", hr, channels.g_bs_ris[:, idx, :])
        out[j] = np.conj(row)
    return out
