"""Positioning bounds (FIM, EFIM, CRB, PEB) and communication metrics.

Parameter ordering of the channel FIM for an unpartitioned RIS is
``[tau_d, tau_r, a_d^R, a_d^I, a_r^R, a_r^I]``. With ``P`` reflected
paths (partitioned RIS) it generalizes to
``[tau_d, tau_r1..tau_rP, a_d^R, a_d^I, a_r1^R, a_r1^I, ...]``.

Transmit symbols are unit amplitude and uncorrelated across beams. Each
beam therefore contributes its own observation of the two delays, and the
FIM sums over beams as well as subcarriers. With a single beam this is the
plain per-subcarrier sum.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import reflected_channels
from .errors import InvalidArgumentError, SingularInformationError
from .geometry import SPEED_OF_LIGHT, direction

PSEUDO_CUTOFF = 1e-12


def _v_of(phase):
    return np.asarray(getattr(phase, "v", phase), complex)


# ---------------------------------------------------------------------------
# Composite amplitudes
# ---------------------------------------------------------------------------

def path_amplitudes(channels, w, phase, k):
    """Per-beam composite amplitudes seen by UE ``k``.

    Returns
    -------
    alpha_d : ndarray, shape (N, K)
        ``g_d a_d^H w_{n,i}`` for every subcarrier ``n`` and beam ``i``.
    alpha_r : ndarray, shape (P, N, K)
        ``g_r a_r^H diag(v) G_n w_{n,i}`` per reflected path.
    """
    w = np.asarray(w, complex)
    omega = 2.0 * np.pi * channels.n * channels.delta_f
    hd = channels.h_direct[:, k, :]                                   # (N, Nt)
    # h^H w carries e^{-j w tau}; strip it to get the amplitude
    alpha_d = np.einsum("nt,nit->ni", np.conj(hd), w) * np.exp(1j * omega * channels.tau_d[k])[:, None]
    refl = reflected_channels(channels, _v_of(phase))[:, :, k, :]     # (P, N, Nt)
    alpha_r = np.einsum("pnt,nit->pni", np.conj(refl), w)
    alpha_r *= np.exp(1j * omega[None, :] * channels.tau_r[:, k][:, None])[:, :, None]
    return alpha_d, alpha_r


def alpha_terms(channels, w, phase, k, n):
    """Composite amplitudes ``(alpha_d, alpha_r)`` at subcarrier position ``n``.

    Symbols are all +1, so the beams add coherently. ``n`` indexes the
    stored subcarriers (0 .. N-1, i.e. subcarrier number ``n + 1``).
    For a partitioned RIS ``alpha_r`` is the sum over sub-arrays.
    """
    alpha_d, alpha_r = path_amplitudes(channels, w, phase, k)
    return complex(alpha_d[n].sum()), complex(alpha_r[:, n].sum())


# ---------------------------------------------------------------------------
# Channel FIM
# ---------------------------------------------------------------------------

def _paths(alpha_d, alpha_r, chi, tau_d, tau_r):
    alpha_d = np.asarray(alpha_d, complex)
    if alpha_d.ndim == 1:
        alpha_d = alpha_d[:, None]
    alpha_r = np.asarray(alpha_r, complex)
    if alpha_r.ndim == 1:
        alpha_r = alpha_r[None, :, None]
    elif alpha_r.ndim == 2:
        alpha_r = alpha_r[None] if alpha_r.shape == alpha_d.shape else alpha_r[:, :, None]
    tau_r = np.atleast_1d(np.asarray(tau_r, float))
    amps = np.concatenate([alpha_d[None], alpha_r], axis=0)           # (paths, N, B)
    taus = np.concatenate([[float(tau_d)], tau_r])
    chis = np.concatenate([[float(chi)], np.ones(len(tau_r))])
    return amps, taus, chis


def fim_channel(alpha_d, alpha_r, chi, tau_d, tau_r, n, delta_f, noise_power):
    """Channel-parameter FIM from the closed-form element expressions.

    Parameters
    ----------
    alpha_d : array, shape (N,) or (N, B)
        Direct-path amplitudes per subcarrier (and per beam).
    alpha_r : array, shape (N,), (N, B) or (P, N, B)
        Reflected-path amplitudes.
    chi : {0, 1}
        Obstruction indicator of the direct path.
    tau_d, tau_r : float or array
        Delays in seconds (``tau_r`` has length P).
    n : array, shape (N,)
        Subcarrier indices.
    delta_f, noise_power : float

    Returns
    -------
    ndarray, shape (3P+3, 3P+3)
        6 x 6 for a single reflected path.
    """
    amps, taus, chis = _paths(alpha_d, alpha_r, chi, tau_d, tau_r)
    n_paths, _, n_beams = amps.shape
    omega = 2.0 * np.pi * np.asarray(n, float) * delta_f
    phase = omega[None, :] * taus[:, None]                            # (paths, N)
    # rot[p, q, n] = e^{j (phi_p - phi_q)}
    rot = np.exp(1j * (phase[:, None, :] - phase[None, :, :]))
    cc = chis[:, None] * chis[None, :]
    scale = 2.0 / noise_power

    # sum over beams of conj(alpha_p) alpha_q, and of conj(alpha_p)
    cross = np.einsum("pnb,qnb->pqn", np.conj(amps), amps)
    conj_sum = np.conj(amps).sum(axis=2)                              # (paths, N)

    j_tt = scale * cc * np.einsum("n,pqn->pq", omega**2, (cross * rot).real)
    t_a = conj_sum[:, None, :] * rot                                  # (p, q, N)
    j_ta_re = scale * cc * np.einsum("n,pqn->pq", omega, (1j * t_a).real)
    j_ta_im = scale * cc * np.einsum("n,pqn->pq", omega, (-t_a).real)
    rot_sum = rot.sum(axis=2) * n_beams
    j_aa_rr = scale * cc * rot_sum.real
    j_aa_ri = scale * cc * (1j * rot_sum).real

    size = 3 * n_paths
    J = np.zeros((size, size))
    ti = np.arange(n_paths)
    ar = n_paths + 2 * ti
    ai = ar + 1
    J[np.ix_(ti, ti)] = j_tt
    J[np.ix_(ti, ar)] = j_ta_re
    J[np.ix_(ti, ai)] = j_ta_im
    J[np.ix_(ar, ar)] = j_aa_rr
    J[np.ix_(ai, ai)] = j_aa_rr
    J[np.ix_(ar, ai)] = j_aa_ri
    J[np.ix_(ai, ar)] = j_aa_ri.T
    lower = np.tril_indices(size, -1)
    J[lower] = J.T[lower]
    return J


def noiseless_signal(alpha_d, alpha_r, chi, tau_d, tau_r, n, delta_f, offsets=None):
    """Noiseless received samples ``mu[n, b]`` as a function of the parameters.

    ``offsets`` perturbs the parameter vector (same ordering as the FIM):
    delays shift directly, amplitude entries add a common complex offset
    to every subcarrier and beam of that path.
    """
    amps, taus, chis = _paths(alpha_d, alpha_r, chi, tau_d, tau_r)
    n_paths = amps.shape[0]
    if offsets is not None:
        offsets = np.asarray(offsets, float)
        taus = taus + offsets[:n_paths]
        add = offsets[n_paths::2] + 1j * offsets[n_paths + 1::2]
        amps = amps + add[:, None, None]
    omega = 2.0 * np.pi * np.asarray(n, float) * delta_f
    ph = np.exp(-1j * omega[None, :] * taus[:, None])                 # (paths, N)
    return np.einsum("p,pnb,pn->nb", chis, amps, ph)


def fim_finite_difference(alpha_d, alpha_r, chi, tau_d, tau_r, n, delta_f, noise_power, rel_step=1e-6):
    """FIM by central differences of the noiseless signal.

    Delay steps are ``rel_step / omega_max`` (a phase step of ``rel_step``
    at the top subcarrier); amplitude steps are ``rel_step`` times the
    largest amplitude magnitude.
    """
    amps, taus, _ = _paths(alpha_d, alpha_r, chi, tau_d, tau_r)
    n_paths = amps.shape[0]
    size = 3 * n_paths
    omega_max = 2.0 * np.pi * float(np.max(n)) * delta_f
    amp_scale = max(float(np.abs(amps).max()), 1e-300)
    steps = np.empty(size)
    steps[:n_paths] = rel_step / omega_max
    steps[n_paths:] = rel_step * amp_scale
    derivs = []
    for i in range(size):
        e = np.zeros(size)
        e[i] = steps[i]
        plus = noiseless_signal(alpha_d, alpha_r, chi, tau_d, tau_r, n, delta_f, e)
        minus = noiseless_signal(alpha_d, alpha_r, chi, tau_d, tau_r, n, delta_f, -e)
        derivs.append(((plus - minus) / (2.0 * steps[i])).ravel())
    D = np.array(derivs)                                              # (size, N*B)
    return 2.0 / noise_power * (np.conj(D) @ D.T).real


def fim_relative_error(J, J_ref):
    """Largest entry error normalized by ``sqrt(J_ii J_jj)`` of the reference.

    Entries on rows whose reference information is zero must match to
    within ``1e-12`` of the largest diagonal entry, else the error is inf.
    """
    J, J_ref = np.asarray(J), np.asarray(J_ref)
    d = np.sqrt(np.maximum(np.diag(J_ref), 0.0))
    norm = np.outer(d, d)
    diff = np.abs(J - J_ref)
    live = norm > 0
    worst = float((diff[live] / norm[live]).max()) if live.any() else 0.0
    dead_tol = 1e-12 * max(float(np.diag(J_ref).max()), 1e-300)
    if np.any(diff[~live] > dead_tol):
        return np.inf
    return worst


def fim_orthogonal(fim, chi):
    """Large-bandwidth approximation: keep the delay diagonal, unit amplitudes.

    Returns ``diag{J_tau_d, J_tau_r.., chi^2, chi^2, 1, 1, ..}``.
    """
    fim = np.asarray(fim)
    n_paths = fim.shape[0] // 3
    diag = np.ones(fim.shape[0])
    diag[:n_paths] = np.diag(fim)[:n_paths]
    diag[n_paths:n_paths + 2] = float(chi) ** 2
    return np.diag(diag)


# ---------------------------------------------------------------------------
# Location transform and EFIM
# ---------------------------------------------------------------------------

def delay_gradient(u, anchor, position_dim=3):
    """Gradient of ``|u - anchor| / c`` with respect to ``u[:position_dim]``."""
    d = np.asarray(u, float) - np.asarray(anchor, float)
    dist = np.linalg.norm(d)
    if dist == 0.0:
        raise InvalidArgumentError("UE position coincides with an anchor")
    return d[:position_dim] / (SPEED_OF_LIGHT * dist)


def jacobian_upsilon(u, p, r, position_dim=2):
    """Transform ``d eta / d eta_loc`` mapping channel FIM to location FIM.

    ``r`` may be one RIS reference point or a (P, 3) array of sub-array
    reference points. Shape is ``(position_dim + 2 + 2P, 3 + 3P)``.
    """
    if position_dim not in (2, 3):
        raise InvalidArgumentError("position_dim must be 2 or 3")
    r = np.atleast_2d(np.asarray(r, float))
    n_paths = 1 + r.shape[0]
    n_amp = 2 * n_paths
    U = np.zeros((position_dim + n_amp, n_paths + n_amp))
    U[:position_dim, 0] = delay_gradient(u, p, position_dim)
    for j, rj in enumerate(r):
        U[:position_dim, 1 + j] = delay_gradient(u, rj, position_dim)
    U[position_dim:, n_paths:] = np.eye(n_amp)
    return U


class EfimResult(NamedTuple):
    efim: np.ndarray
    j_loc: np.ndarray
    dropped: tuple  # nuisance indices carrying no information


def efim_position(fim, upsilon):
    """Location FIM ``U J U^T`` and its Schur complement onto position.

    Nuisance parameters with zero information (the direct amplitude when
    the LoS path is blocked) cannot be inverted; they are dropped before
    the complement and reported in ``dropped``.
    """
    j_loc = upsilon @ fim @ upsilon.T
    j_loc = 0.5 * (j_loc + j_loc.T)
    n_amp = upsilon.shape[1] - upsilon.shape[1] // 3
    pd = upsilon.shape[0] - n_amp
    diag = np.diag(j_loc)[pd:]
    tol = 1e-14 * max(float(np.abs(np.diag(j_loc)).max()), 1e-300)
    keep = np.flatnonzero(diag > tol)
    dropped = tuple(int(i) for i in np.flatnonzero(diag <= tol))
    J_pp = j_loc[:pd, :pd]
    if keep.size == 0:
        return EfimResult(J_pp.copy(), j_loc, dropped)
    idx = pd + keep
    J_pn = j_loc[:pd][:, idx]
    J_nn = j_loc[np.ix_(idx, idx)]
    efim = J_pp - J_pn @ np.linalg.solve(J_nn, J_pn.T)
    return EfimResult(0.5 * (efim + efim.T), j_loc, dropped)


def _psi(phi, theta, position_dim):
    q = direction(phi, theta)[..., :position_dim]
    return q[..., :, None] * q[..., None, :]


def ranging_weights(channels, w, phase, k, noise_power):
    """``rho`` terms for UE ``k``: beam-summed received SNR per path.

    Returns ``rho_d`` (N,) and ``rho_r`` (P, N).
    """
    alpha_d, alpha_r = path_amplitudes(channels, w, phase, k)
    rho_d = (np.abs(alpha_d) ** 2).sum(axis=1) / noise_power
    rho_r = (np.abs(alpha_r) ** 2).sum(axis=2) / noise_power
    return rho_d, rho_r


def efim_closed_form(channels, w, phase, k, chi, noise_power, position_dim=2):
    """Per-path EFIMs and their sum for UE ``k``.

    Returns
    -------
    J_d : ndarray (pd, pd)
        Direct-path EFIM (before the obstruction flag is applied).
    J_r : ndarray (pd, pd)
        Reflected-path EFIM, summed over RIS sub-arrays.
    efim : ndarray (pd, pd)
        ``chi * J_d + J_r``.
    """
    rho_d, rho_r = ranging_weights(channels, w, phase, k, noise_power)
    n2 = channels.n.astype(float) ** 2
    coef = 8.0 * np.pi**2 * channels.delta_f**2 / SPEED_OF_LIGHT**2
    J_d = coef * float(n2 @ rho_d) * _psi(channels.phi_d[k], channels.theta_d[k], position_dim)
    psi_r = _psi(channels.phi_r[:, k], channels.theta_r[:, k], position_dim)    # (P, pd, pd)
    J_r = coef * np.einsum("pn,n,pab->ab", rho_r, n2, psi_r)
    return J_d, J_r, chi * J_d + J_r


@dataclass
class FisherBundle:
    """All Fisher quantities for one UE."""

    j_eta: np.ndarray
    j_eta_approx: np.ndarray
    upsilon: np.ndarray
    j_loc: np.ndarray
    efim: np.ndarray
    j_d: np.ndarray
    j_r: np.ndarray
    dropped: tuple = ()


def fisher_bundle(channels, w, phase, k, chi, noise_power, position_dim=2, approximate=True):
    """Run the full pipeline: amplitudes, channel FIM, transform, Schur.

    With ``approximate`` the orthogonal large-bandwidth FIM feeds the
    location transform, otherwise the exact FIM does.
    """
    alpha_d, alpha_r = path_amplitudes(channels, w, phase, k)
    J = fim_channel(alpha_d, alpha_r, chi, channels.tau_d[k], channels.tau_r[:, k],
                    channels.n, channels.delta_f, noise_power)
    J_ap = fim_orthogonal(J, chi)
    U = jacobian_upsilon(channels.ue_positions[k], channels.bs_position,
                         channels.ris_positions, position_dim)
    res = efim_position(J_ap if approximate else J, U)
    J_d, J_r, _ = efim_closed_form(channels, w, phase, k, chi, noise_power, position_dim)
    return FisherBundle(J, J_ap, U, res.j_loc, res.efim, J_d, J_r, res.dropped)


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

class PositionBound(NamedTuple):
    crb: float
    peb: float
    deficiency: int


def crb_peb(efim, mode="strict"):
    """CRB ``tr(efim^-1)`` and PEB ``sqrt(CRB)``.

    In ``pseudo`` mode the trace runs over the observable eigen-directions
    (eigenvalue above ``1e-12 * lambda_max``) and ``deficiency`` counts the
    rest. ``strict`` mode raises :class:`SingularInformationError` for a
    rank-deficient EFIM.
    """
    efim = 0.5 * (np.asarray(efim, float) + np.asarray(efim, float).T)
    lam, vec = np.linalg.eigh(efim)
    top = lam.max() if lam.size else 0.0
    observable = lam > PSEUDO_CUTOFF * top if top > 0 else np.zeros(lam.shape, bool)
    deficiency = int(lam.size - observable.sum())
    if mode == "strict":
        if deficiency:
            raise SingularInformationError(
                f"EFIM is rank deficient ({deficiency} unobservable direction(s))",
                directions=vec[:, ~observable],
            )
        crb = float(np.sum(1.0 / lam))
    elif mode == "pseudo":
        crb = float(np.sum(1.0 / lam[observable])) if observable.any() else np.inf
    else:
        raise InvalidArgumentError(f"unknown PEB mode {mode!r}")
    return PositionBound(crb, float(np.sqrt(crb)), deficiency)


def sinr_all(channels, w, phase, chi, noise_power):
    """SINR of every UE (subcarrier-summed signal over summed interference)."""
    from .channel import effective_channels

    g = effective_channels(channels, _v_of(phase), chi)                 # (N, K, Nt)
    gains = np.abs(np.einsum("nkt,nit->nki", np.conj(g), np.asarray(w, complex))) ** 2
    total = gains.sum(axis=0)                                          # (K, K): [k, i]
    signal = np.diag(total).copy()
    interference = total.sum(axis=1) - signal
    return signal / (interference + noise_power)


def sinr_rate(channels, w, phase, chi, noise_power, k):
    """``(gamma_k, R_k)`` with ``R_k = log2(1 + gamma_k)`` in bps/Hz."""
    gamma = float(sinr_all(channels, w, phase, chi, noise_power)[k])
    return gamma, float(np.log2(1.0 + gamma))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def watts_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p, float) * 1000.0)


@dataclass
class MetricsReport:
    """Per-UE communication and positioning metrics of one solution.

    CSV column order (``csv_header``): ``power_total_w, power_total_dbm``,
    then per UE ``sinr_k, rate_k_bpshz, crb_k_m2, peb_k_m, efim_rank_k,
    efim_cond_k``.
    """

    sinr: np.ndarray
    rate: np.ndarray
    crb: np.ndarray
    peb: np.ndarray
    efim_rank: np.ndarray
    efim_cond: np.ndarray
    power_w: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def power_dbm(self):
        return float(watts_to_dbm(self.power_w))

    @property
    def n_ue(self):
        return len(self.rate)

    def csv_header(self):
        cols = ["power_total_w", "power_total_dbm"]
        for k in range(1, self.n_ue + 1):
            cols += [f"sinr_k{k}", f"rate_k{k}_bpshz", f"crb_k{k}_m2", f"peb_k{k}_m",
                     f"efim_rank_k{k}", f"efim_cond_k{k}"]
        return cols

    def to_row(self):
        row = [self.power_w, self.power_dbm]
        for k in range(self.n_ue):
            row += [float(self.sinr[k]), float(self.rate[k]), float(self.crb[k]),
                    float(self.peb[k]), int(self.efim_rank[k]), float(self.efim_cond[k])]
        return row

    def to_dict(self):
        def clean(x):
            x = float(x)
            return x if np.isfinite(x) else None

        return {
            "power_total_w": clean(self.power_w),
            "power_total_dbm": clean(self.power_dbm),
            "ue": [
                {
                    "sinr": clean(self.sinr[k]),
                    "rate_bpshz": clean(self.rate[k]),
                    "crb_m2": clean(self.crb[k]),
                    "peb_m": clean(self.peb[k]),
                    "efim_rank": int(self.efim_rank[k]),
                    "efim_cond": clean(self.efim_cond[k]),
                }
                for k in range(self.n_ue)
            ],
            "diagnostics": self.diagnostics,
        }


def evaluate(cfg, channels, phase, w, diagnostics=None):
    """Evaluate every metric of beamformers ``w`` (N, K, Nt) under ``phase``.

    PEB uses ``cfg.peb_mode``; in strict mode a singular EFIM raises.
    """
    w = np.asarray(w, complex)
    chi = np.asarray(cfg.obstruction, float)
    sigma2 = cfg.noise_power
    sinr = sinr_all(channels, w, phase, chi, sigma2)
    rate = np.log2(1.0 + sinr)
    K = channels.n_ue
    crb, peb = np.empty(K), np.empty(K)
    rank, cond = np.empty(K, int), np.empty(K)
    for k in range(K):
        _, _, efim = efim_closed_form(channels, w, phase, k, chi[k], sigma2, cfg.position_dim)
        lam = np.linalg.eigvalsh(efim)
        top = lam.max()
        rank[k] = int(np.sum(lam > PSEUDO_CUTOFF * top)) if top > 0 else 0
        cond[k] = top / lam.min() if lam.min() > 0 else np.inf
        try:
            bound = crb_peb(efim, cfg.peb_mode)
        except SingularInformationError as exc:
            exc.ue = k
            raise
        crb[k], peb[k] = bound.crb, bound.peb
    power = float(np.sum(np.abs(w) ** 2))
    return MetricsReport(sinr, rate, crb, peb, rank, cond, power, dict(diagnostics or {}))
