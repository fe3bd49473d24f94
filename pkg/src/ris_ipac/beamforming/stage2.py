"""Stage II: transmit beamforming by semidefinite relaxation.

With the RIS phases fixed, every UE ``k`` sees the composite channel
``g_{n,k}^H = chi_k h_{d,n,k}^H + h_{r,n,k}^H diag(v) G_n``. Lifting each
beamformer to ``W_{n,k} = w w^H`` makes the rate constraints linear and
the PEB constraint an LMI:

    [[Lambda_k, I], [I, F_k(W)]] >= 0,   tr(Lambda_k) <= delta_k^2,

where ``F_k(W)`` is the 2-D (or 3-D) EFIM, linear in ``{W_{n,i}}``.
After solving, rank-one beamformers are extracted by joint Gaussian
randomization followed by the smallest common rescaling that restores
every constraint.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..channel import effective_channels, reflected_channels
from ..errors import InfeasibleConstraintsError, NoFeasibleCandidateError, SingularInformationError, SolverError
from ..geometry import SPEED_OF_LIGHT, direction
from ..metrics import PSEUDO_CUTOFF
from ..sdp import SdpProblem, get_backend, hermitian_unembed, real_functional
from ..sdp.randomize import principal_vector, psd_sqrt

log = logging.getLogger(__name__)

# accept a max_iter exit if the iterate is this close to optimal
LOOSE_TOL = 1e-5
RANK_TOL = 1e-8


@dataclass
class BeamSolution:
    """Beamformers ``w[n, k]`` (N, K, Nt) and how they were obtained."""

    w: np.ndarray
    sdr_power: float
    sdr_rank_ratios: np.ndarray
    trials: int
    scale: float = 1.0
    status: str = "optimal"
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_power(self):
        return float(np.sum(np.abs(self.w) ** 2))

    @property
    def sdr_gap(self):
        """Relative excess power of the extracted solution over the relaxation."""
        if self.sdr_power <= 0:
            return 0.0 if self.total_power == 0 else np.inf
        return self.total_power / self.sdr_power - 1.0


@dataclass
class _Model:
    """Everything the SDP and the extraction step share."""

    g: np.ndarray            # (N, K, Nt) effective channels
    h_d: np.ndarray          # (N, K, Nt)
    h_r: np.ndarray          # (P, N, K, Nt)
    chi: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    sigma2: float
    coef_n: np.ndarray       # (N,) 8 pi^2 df^2 n^2 / (c^2 sigma^2)
    psi_d: np.ndarray        # (K, pd, pd)
    psi_r: np.ndarray        # (K, P, pd, pd)
    bases: list              # per UE: (pd, r) orthonormal observable basis or None
    peb_ue: list             # UEs with an active PEB constraint
    rate_ue: list            # UEs with an active rate constraint
    max_power: float
    mode: str


def _observable_basis(q, mode, ue):
    """Orthonormal basis of span(q), checked against the mode."""
    pd = q.shape[1]
    if len(q) == 0:
        U = np.zeros((pd, 0))
    else:
        u, s, _ = np.linalg.svd(q.T, full_matrices=False)
        keep = s > np.sqrt(PSEUDO_CUTOFF) * s.max() if s.max() > 0 else np.zeros_like(s, bool)
        U = u[:, keep]
    if U.shape[1] < pd and mode == "strict":
        missing = np.linalg.svd(U.T if U.size else np.zeros((1, pd)), full_matrices=True)[2][U.shape[1]:].T
        raise SingularInformationError(
            f"UE {ue + 1}: the active anchors observe only {U.shape[1]} of {pd} position "
            "directions, so the PEB is unbounded for every beamformer",
            directions=missing, ue=ue,
        )
    return U


def build_model(cfg, channels, phase):
    v = np.asarray(getattr(phase, "v", phase), complex)
    chi = np.asarray(cfg.obstruction, float)
    pd = cfg.position_dim
    g = effective_channels(channels, v, chi)
    h_r = reflected_channels(channels, v)
    sigma2 = cfg.noise_power
    n = channels.n.astype(float)
    coef_n = 8.0 * np.pi**2 * channels.delta_f**2 * n**2 / (SPEED_OF_LIGHT**2 * sigma2)
    qd = direction(channels.phi_d, channels.theta_d)[:, :pd]                 # (K, pd)
    qr = direction(channels.phi_r, channels.theta_r)[..., :pd]              # (P, K, pd)
    psi_d = qd[:, :, None] * qd[:, None, :]
    psi_r = np.transpose(qr[..., :, None] * qr[..., None, :], (1, 0, 2, 3))
    delta = np.asarray(cfg.peb_threshold, float)
    beta = 2.0 ** np.asarray(cfg.rate_req, float) - 1.0
    bases, peb_ue = [], []
    for k in range(channels.n_ue):
        if not np.isfinite(delta[k]):
            bases.append(None)
            continue
        anchors = list(qr[:, k]) + ([qd[k]] if chi[k] else [])
        bases.append(_observable_basis(np.array(anchors), cfg.peb_mode, k))
        peb_ue.append(k)
    rate_ue = [k for k in range(channels.n_ue) if beta[k] > 0]
    return _Model(g, channels.h_direct, h_r, chi, beta, delta, sigma2, coef_n, psi_d, psi_r,
                  bases, peb_ue, rate_ue, float(cfg.max_power_w), cfg.peb_mode)


def _efim_coefficients(model, k):
    """Per-(n) Hermitian matrices ``H[n, a, b]`` with ``F_k[a,b] = sum_{n,i} tr(W_{n,i} H[n,a,b])``."""
    hd = model.h_d[:, k]                                  # (N, Nt)
    hr = model.h_r[:, :, k]                               # (P, N, Nt)
    Rd = hd[:, :, None] * np.conj(hd)[:, None, :]         # (N, Nt, Nt)
    Rr = hr[..., :, None] * np.conj(hr)[..., None, :]     # (P, N, Nt, Nt)
    H = model.chi[k] * np.einsum("ab,nst->nabst", model.psi_d[k], Rd)
    H = H + np.einsum("pab,pnst->nabst", model.psi_r[k], Rr)
    return model.coef_n[:, None, None, None, None] * H    # (N, pd, pd, Nt, Nt)


def efim_of(model, k, w):
    """EFIM of UE ``k`` for beamformers ``w`` (N, K, Nt)."""
    a_d = np.abs(np.einsum("nt,nit->ni", np.conj(model.h_d[:, k]), w)) ** 2
    a_r = np.abs(np.einsum("pnt,nit->pni", np.conj(model.h_r[:, :, k]), w)) ** 2
    F = model.chi[k] * np.einsum("n,ni,ab->ab", model.coef_n, a_d, model.psi_d[k])
    return F + np.einsum("n,pni,pab->ab", model.coef_n, a_r, model.psi_r[k])


def _power_unit(model):
    """Power scale that makes the relaxed optimum roughly O(1) per block.

    Uses the power a matched-filter beam set needs to meet every
    constraint (an upper bound on the optimum when finite).
    """
    N, K, _ = model.g.shape
    norms = np.linalg.norm(model.g, axis=-1, keepdims=True)
    w = np.where(norms > 0, model.g / np.where(norms > 0, norms, 1.0), 0.0)
    s = _required_scale(model, w)
    if np.isfinite(s) and s > 0:
        return s**2 * float(np.sum(np.abs(w) ** 2)) / (N * K)
    gain = np.mean(np.sum(np.abs(model.g) ** 2, axis=-1))
    return model.sigma2 / gain if gain > 0 else 1.0


def assemble_sdp(model, families=None, power_unit=None):
    """Build the relaxed problem in units of ``s_p`` watts.

    The power cap is not part of the problem; callers compare the optimum
    against it, which keeps a loose cap from distorting the scaling.

    ``families`` restricts the constraint set to a subset of
    ``("rate", k)`` / ``("peb", k)`` keys (used to diagnose infeasibility).
    Returns ``(problem, layout)``.
    """
    N, K, Nt = model.g.shape
    s_p = _power_unit(model) if power_unit is None else power_unit
    prob = SdpProblem()
    wb = np.empty((N, K), int)
    for n in range(N):
        for k in range(K):
            wb[n, k] = prob.add_block("psd", 2 * Nt)
            prob.set_objective(wb[n, k], 0.5 * np.eye(2 * Nt))
    want = (lambda key: True) if families is None else (lambda key: key in families)

    # rate: sum_n g^H W_k g - beta sum_{j != k} sum_n g^H W_j g >= beta sigma^2
    for k in model.rate_ue:
        if not want(("rate", k)):
            continue
        coefs = {}
        for n in range(N):
            R = real_functional(np.outer(model.g[n, k], np.conj(model.g[n, k]))) * (s_p / model.sigma2)
            for j in range(K):
                coefs[wb[n, j]] = R if j == k else -model.beta[k] * R
        prob.add_constraint(coefs, ">=", model.beta[k])

    # PEB: Z_k = [[L, I], [I, T U^T F U T]] >= 0, tr(T^2 L) <= delta^2
    zb = {}
    for k in model.peb_ue:
        if not want(("peb", k)):
            continue
        U = model.bases[k]
        r = U.shape[1]
        H = _efim_coefficients(model, k)                                      # (N, pd, pd, Nt, Nt)
        HU = np.einsum("ac,nabst,bd->ncdst", U, H, U)                         # (N, r, r, Nt, Nt)
        # precondition with the EFIM of an isotropic unit-power beam
        F_ref = np.einsum("ncdss->cd", HU).real * s_p * K / Nt
        T = _peb_precondition(F_ref)
        HT = np.einsum("ac,ncdst,db->nabst", T, HU, T)
        z = prob.add_block("psd", 2 * r)
        zb[k] = z
        for a in range(r):
            for b in range(r):
                E = np.zeros((2 * r, 2 * r))
                E[a, r + b] = E[r + b, a] = 0.5
                prob.add_constraint({z: E}, "=", 1.0 if a == b else 0.0)
        for a in range(r):
            for b in range(a, r):
                E = np.zeros((2 * r, 2 * r))
                E[r + a, r + b] = E[r + b, r + a] = 1.0 if a == b else 0.5
                coefs = {z: E}
                for n in range(N):
                    C = -real_functional(HT[n, a, b]) * s_p
                    for i in range(K):
                        coefs[wb[n, i]] = C
                prob.add_constraint(coefs, "=", 0.0)
        L = np.zeros((2 * r, 2 * r))
        L[:r, :r] = T @ T
        prob.add_constraint({z: L}, "<=", model.delta[k] ** 2)

    return prob, {"w_blocks": wb, "z_blocks": zb, "power_unit": s_p}


def _solve(model, families, tol, backend, rescales=3):
    """Solve, re-scaling the power unit until the optimum is O(1) per block.

    A badly chosen unit leaves the PEB blocks and the beamformer blocks on
    very different scales, which stalls the interior-point iteration.
    """
    N, K, _ = model.g.shape
    s_p = None
    for attempt in range(rescales + 1):
        prob, layout = assemble_sdp(model, families, s_p)
        sol = get_backend(backend)(prob, tol=tol)
        s_p = layout["power_unit"]
        obj = sol.primal_objective
        if sol.status == "infeasible" or not np.isfinite(obj) or obj <= 0:
            break
        ratio = obj / (N * K)
        if _accept(sol) and 1e-2 <= ratio <= 1e2:
            break
        if attempt < rescales:
            log.debug("rescaling power unit by %.3g (status %s)", ratio, sol.status)
            s_p *= ratio
    return prob, layout, sol


def _accept(sol):
    if sol.status == "optimal":
        return True
    return sol.status == "max_iter" and max(sol.gap, sol.primal_residual, sol.dual_residual) <= LOOSE_TOL


def power_lower_bounds(model):
    """Per-family lower bounds on the total power, keyed ``(family, k)``.

    Rate: ``P >= beta sigma^2 / max_n |g_{n,k}|^2`` (interference only
    hurts). PEB: ``tr(F^-1) >= r^2 / tr(F)`` and ``tr(F) <= P max_n
    lambda_max(sum_a H_n[a, a])``.
    """
    out = {}
    for k in model.rate_ue:
        best = float(np.max(np.sum(np.abs(model.g[:, k]) ** 2, axis=-1)))
        out[("rate", k)] = model.beta[k] * model.sigma2 / best if best > 0 else np.inf
    for k in model.peb_ue:
        U = model.bases[k]
        r = U.shape[1]
        H = np.einsum("ac,nabst,bc->nst", U, _efim_coefficients(model, k), U)
        top = max(float(np.linalg.eigvalsh(0.5 * (h + np.conj(h).T)).max()) for h in H)
        out[("peb", k)] = r**2 / (model.delta[k] ** 2 * top) if top > 0 else np.inf
    return out


def _fails(model, families, tol, backend):
    _, layout, sol = _solve(model, families, tol, backend)
    if sol.status == "infeasible":
        return True
    return _accept(sol) and sol.primal_objective * layout["power_unit"] > model.max_power


def diagnose_infeasibility(model, tol=1e-8, backend="ipm"):
    """Constraint families that cannot be met on their own within the power cap.

    Falls back to a jointly failing family and finally to ``("joint", None)``.
    """
    binding = [("rate", k) for k in model.rate_ue if _fails(model, {("rate", k)}, tol, backend)]
    binding += [("peb", k) for k in model.peb_ue if _fails(model, {("peb", k)}, tol, backend)]
    if binding:
        return binding
    for fam in ("rate", "peb"):
        keys = {(fam, k) for k in (model.rate_ue if fam == "rate" else model.peb_ue)}
        if keys and _fails(model, keys, tol, backend):
            return sorted(keys)
    return [("joint", None)]


def _required_scale(model, w):
    """Smallest ``s`` such that ``s * w`` meets every constraint (inf if none).

    Signal, interference and EFIM all scale with ``s^2``, so each family
    gives a closed-form lower bound on ``s^2``.
    """
    gains = np.abs(np.einsum("nkt,nit->nki", np.conj(model.g), w)) ** 2
    total = gains.sum(axis=0)
    need = 0.0
    for k in model.rate_ue:
        sig = total[k, k]
        intf = total[k].sum() - sig
        margin = sig - model.beta[k] * intf
        if margin <= 0:
            return np.inf
        need = max(need, model.beta[k] * model.sigma2 / margin)
    for k in model.peb_ue:
        U = model.bases[k]
        F = U.T @ efim_of(model, k, w) @ U
        lam = np.linalg.eigvalsh(0.5 * (F + F.T))
        if lam.min() <= PSEUDO_CUTOFF * max(lam.max(), 0.0) or lam.max() <= 0:
            return np.inf
        # the inverse is only known to about cond * eps; stay on the safe side
        slack = 1.0 + 10.0 * np.finfo(float).eps * lam.max() / lam.min()
        need = max(need, slack * float(np.sum(1.0 / lam)) / model.delta[k] ** 2)
    return np.sqrt(need)


def _peb_precondition(F_ref):
    lam, V = np.linalg.eigh(0.5 * (F_ref + F_ref.T))
    return (V / np.sqrt(lam)) @ V.T


def power_control(model, w, s_p, tol=1e-8, backend="ipm"):
    """Re-optimize the per-beam powers of ``w`` with the directions fixed.

    With ``w_{n,k} = sqrt(p_{n,k}) u_{n,k}`` every constraint is linear in
    ``p`` (the PEB one through the same Schur-complement LMI), so this is a
    small exact problem. Returns the new beamformers or ``None``.
    """
    N, K, Nt = w.shape
    norms = np.linalg.norm(w, axis=-1)
    u = np.where(norms[..., None] > 0, w / np.where(norms > 0, norms, 1.0)[..., None], 0.0)
    prob = SdpProblem()
    pb = prob.add_block("nonneg", N * K)
    prob.set_objective(pb, np.ones(N * K))
    # gains[n, k, j] = |g_{n,k}^H u_{n,j}|^2
    gains = np.abs(np.einsum("nkt,njt->nkj", np.conj(model.g), u)) ** 2 * (s_p / model.sigma2)
    for k in model.rate_ue:
        c = -model.beta[k] * gains[:, k, :]
        c[:, k] = gains[:, k, k]
        prob.add_constraint({pb: c.reshape(-1)}, ">=", model.beta[k])
    for k in model.peb_ue:
        U = model.bases[k]
        r = U.shape[1]
        H = _efim_coefficients(model, k)
        # per-beam EFIM contributions (N, K, r, r)
        D = np.einsum("ac,nabst,nis,bd,nit->nicd", U, H, np.conj(u), U, u).real * s_p
        T = _peb_precondition(D.sum(axis=(0, 1)) + 1e-300 * np.eye(r))
        DT = np.einsum("ac,nicd,db->niab", T, D, T)
        z = prob.add_block("psd", 2 * r)
        for a in range(r):
            for b in range(r):
                E = np.zeros((2 * r, 2 * r))
                E[a, r + b] = E[r + b, a] = 0.5
                prob.add_constraint({z: E}, "=", 1.0 if a == b else 0.0)
        for a in range(r):
            for b in range(a, r):
                E = np.zeros((2 * r, 2 * r))
                E[r + a, r + b] = E[r + b, r + a] = 1.0 if a == b else 0.5
                prob.add_constraint({z: E, pb: -DT[:, :, a, b].reshape(-1)}, "=", 0.0)
        L = np.zeros((2 * r, 2 * r))
        L[:r, :r] = T @ T
        prob.add_constraint({z: L}, "<=", model.delta[k] ** 2)
    try:
        sol = get_backend(backend)(prob, tol=tol)
    except (np.linalg.LinAlgError, SolverError):
        return None
    if not _accept(sol):
        return None
    p = np.clip(sol.x[pb], 0.0, None).reshape(N, K) * s_p
    return np.sqrt(p)[..., None] * u


def extract_beamformers(model, W, n_trials, rng, margin=1e-9, refine=3, s_p=None,
                        tol=1e-8, backend="ipm"):
    """Rank-one beamformers from the relaxed ``W`` (N, K, Nt, Nt).

    Candidates are the principal eigenvectors and ``n_trials`` joint
    Gaussian draws. Up to ``refine`` of them (the cheapest feasible ones,
    else the first ones) also get their beam powers re-optimized by
    :func:`power_control`, which matters when a common rescaling cannot
    restore the interference balance of a draw.

    Returns ``(w, scale, trials, ratios)``.
    """
    N, K, Nt = model.g.shape
    principal = np.empty((N, K, Nt), complex)
    ratios = np.empty((N, K))
    for n in range(N):
        for k in range(K):
            principal[n, k], ratios[n, k] = principal_vector(W[n, k])
    ratios = np.where(np.isfinite(ratios), ratios, 0.0)
    target = float(np.real(np.trace(W, axis1=-2, axis2=-1)).sum())
    rank_one = bool(np.all(ratios < RANK_TOL))

    candidates = [principal]
    if not rank_one:
        roots = psd_sqrt(W)
        shape = (n_trials, N, K, Nt)
        z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        for cand in np.einsum("nkij,tnkj->tnki", roots, z):
            p = np.sum(np.abs(cand) ** 2)
            if p > 0:
                cand *= np.sqrt(target / p)
            candidates.append(cand)

    scored = []
    for i, cand in enumerate(candidates):
        s = _required_scale(model, cand)
        if np.isfinite(s):
            scored.append((s**2 * float(np.sum(np.abs(cand) ** 2)), i, s))
    scored.sort()
    best, best_power = None, np.inf
    if scored:
        power, i, s = scored[0]
        s *= 1.0 + margin
        best, best_power = (candidates[i] * s, s), power * (1.0 + margin) ** 2
    if refine and not rank_one:
        order = [i for _, i, _ in scored[:refine]] or list(range(min(refine, len(candidates))))
        unit = s_p if s_p is not None else max(target / (N * K), 1e-300)
        for i in order:
            w = power_control(model, candidates[i], unit, tol, backend)
            if w is None:
                continue
            s = _required_scale(model, w)
            if not np.isfinite(s):
                continue
            s *= 1.0 + margin
            power = s**2 * float(np.sum(np.abs(w) ** 2))
            if power < best_power:
                best, best_power = (w * s, s), power
    if best is None:
        raise NoFeasibleCandidateError(f"no feasible beamformer among {len(candidates)} candidates")
    return best[0], best[1], 0 if rank_one else n_trials, ratios


def stage2_beamforming(cfg, channels, phase, rng, tol=1e-8, backend="ipm"):
    """Minimum-power beamformers meeting every rate and PEB requirement.

    Raises
    ------
    InfeasibleConstraintsError
        The relaxation is infeasible; ``binding`` names the families.
    SingularInformationError
        Strict PEB mode with anchors that cannot observe every direction.
    """
    model = build_model(cfg, channels, phase)
    N, K, Nt = model.g.shape
    if not model.rate_ue and not model.peb_ue:
        w = np.zeros((N, K, Nt), complex)
        return BeamSolution(w, 0.0, np.zeros((N, K)), 0, diagnostics={"sdr_status": "trivial"})

    bounds = power_lower_bounds(model)
    over = [key for key, p in bounds.items() if p > model.max_power]
    if over:
        names = ", ".join(f"{f} (UE {k + 1})" for f, k in over)
        raise InfeasibleConstraintsError(
            f"constraints cannot be met within {model.max_power:g} W: {names}", over)

    prob, layout, sol = _solve(model, None, tol, backend)
    too_costly = _accept(sol) and sol.primal_objective * layout["power_unit"] > model.max_power
    if sol.status == "infeasible" or too_costly:
        binding = diagnose_infeasibility(model, tol, backend)
        names = ", ".join(f"{f} (UE {k + 1})" if k is not None else f for f, k in binding)
        raise InfeasibleConstraintsError(f"constraints cannot be met: {names}", binding, sol)
    if not _accept(sol):
        raise SolverError(f"beamforming relaxation ended with status {sol.status}", sol)

    s_p = layout["power_unit"]
    wb = layout["w_blocks"]
    W = np.empty((N, K, Nt, Nt), complex)
    for n in range(N):
        for k in range(K):
            W[n, k] = s_p * hermitian_unembed(sol.x[wb[n, k]])
    # the dual objective is the certified lower bound when the iterate is not exact
    sdr_power = min(float(np.real(np.trace(W, axis1=-2, axis2=-1)).sum()),
                    s_p * float(sol.dual_objective))
    w, scale, trials, ratios = extract_beamformers(model, W, cfg.random_trials, rng, s_p=s_p,
                                                 tol=tol, backend=backend)
    diag = {
        "sdr_status": sol.status,
        "sdr_iterations": sol.iterations,
        "sdr_gap": sol.gap,
        "power_unit_w": s_p,
        "ridge": sol.diagnostics.get("ridge", []),
    }
    return BeamSolution(w, sdr_power, ratios, trials, scale, diagnostics=diag)
