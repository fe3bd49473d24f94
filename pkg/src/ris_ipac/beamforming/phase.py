"""Stage I: RIS reflection design.

The phase stage maximizes the rate-weighted reflected-channel gain

    f(v) = sum_{k, n} v^T A_{n,k} v^* / beta_k = v^H Q v,
    Q = sum_{k, n} conj(A_{n,k}) / beta_k,

over ``|v_m| = 1/sqrt(M)``, either over ``L`` discrete levels by
multi-start coordinate ascent or over the continuum by a semidefinite
relaxation followed by Gaussian randomization.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError, SolverError
from ..sdp import SdpProblem, gaussian_randomize, get_backend, hermitian_embed, hermitian_unembed

MAX_SWEEPS = 50


@dataclass
class PhaseProfile:
    """RIS reflection vector ``v`` with its provenance.

    ``levels`` holds the discrete level index of every element (``None``
    for non-discrete modes); ``partition`` holds one index array per RIS
    sub-array.
    """

    v: np.ndarray
    mode: str
    n_levels: int = None
    levels: np.ndarray = None
    partition: tuple = ()
    objective: float = np.nan
    sdr_bound: float = np.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return len(self.v)

    @property
    def phases(self):
        return np.mod(np.angle(self.v), 2.0 * np.pi)


def composite_matrices(channels, k, n):
    """``C = diag(h_r^H) G`` (M x Nt) and ``A = C C^H`` for UE ``k``, subcarrier position ``n``."""
    C = np.conj(channels.h_ris_ue[n, k])[:, None] * channels.g_bs_ris[n]
    return C, C @ np.conj(C).T


def stage1_weights(rate_req):
    """``beta_k = 2^r_k - 1``; UEs with ``r_k = 0`` get weight 0 (excluded).

    Returns the inverse weights ``1/beta_k``. If every UE is excluded all
    weights fall back to 1.
    """
    beta = 2.0 ** np.asarray(rate_req, float) - 1.0
    inv = np.where(beta > 0, 1.0 / np.where(beta > 0, beta, 1.0), 0.0)
    if not np.any(inv > 0):
        inv = np.ones_like(inv)
    return inv


def objective_matrix(channels, inv_beta, parts=None):
    """Hermitian ``Q`` with ``f(v) = v^H Q v``.

    With ``parts`` (one index array per sub-array), UE ``k`` only
    contributes through sub-array ``k mod len(parts)``.
    """
    M = channels.n_ris
    Q = np.zeros((M, M), complex)
    for k in range(channels.n_ue):
        if inv_beta[k] == 0:
            continue
        A = np.zeros((M, M), complex)
        for n in range(channels.n_sub):
            A += composite_matrices(channels, k, n)[1]
        if parts is not None and len(parts) > 1:
            mask = np.zeros(M, bool)
            mask[parts[k % len(parts)]] = True
            A = A * np.outer(mask, mask)
        Q += inv_beta[k] * np.conj(A)
    return 0.5 * (Q + np.conj(Q).T)


def phase_objective(Q, v):
    v = np.asarray(v, complex)
    return float(np.real(np.conj(v) @ Q @ v))


def _nearest_level(xi, L):
    # nearest of the L levels to angle xi; ties go to the smaller index
    x = np.mod(xi, 2.0 * np.pi) * L / (2.0 * np.pi)
    lo = int(np.floor(x))
    frac = x - lo
    lo, hi = lo % L, (lo + 1) % L
    if abs(frac - 0.5) <= 1e-12:
        return min(lo, hi)
    return lo if frac < 0.5 else hi


def coordinate_ascent(Q, L, init_levels, max_sweeps=MAX_SWEEPS):
    """Cyclic coordinate ascent over level indices from ``init_levels``.

    Returns ``(levels, objective, trace, sweeps)``; ``trace`` records the
    objective after every coordinate update.
    """
    M = Q.shape[0]
    grid = np.exp(2j * np.pi * np.arange(L) / L)
    levels = np.array(init_levels, int)
    u = grid[levels]
    Qu = Q @ u
    trace = [float(np.real(np.conj(u) @ Qu)) / M]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        changed = False
        for m in range(M):
            c = Qu[m] - Q[m, m] * u[m]
            if abs(c) == 0.0:
                trace.append(trace[-1])
                continue
            new = _nearest_level(np.angle(c), L)
            if new != levels[m]:
                # keep the old level when the gain is only a rounding tie
                gain = np.real(np.conj(grid[new] - u[m]) * c)
                if gain > 0:
                    delta = grid[new] - u[m]
                    Qu += Q[:, m] * delta
                    u[m] = grid[new]
                    levels[m] = new
                    changed = True
            trace.append(float(np.real(np.conj(u) @ Qu)) / M)
        if not changed:
            break
    return levels, trace[-1], trace, sweeps


def stage1_discrete(channels, inv_beta, L, starts, rng, parts=None):
    """Best-of-starts discrete phase design (all-zero start plus ``starts`` random ones)."""
    if L < 2:
        raise InvalidArgumentError("discrete phases need at least 2 levels")
    Q = objective_matrix(channels, inv_beta, parts)
    M = Q.shape[0]
    inits = [np.zeros(M, int)] + [rng.integers(0, L, M) for _ in range(int(starts))]
    best, traces = None, []
    for init in inits:
        levels, obj, trace, sweeps = coordinate_ascent(Q, L, init)
        traces.append(trace)
        if best is None or obj > best[1]:
            best = (levels, obj, sweeps)
    levels, obj, _ = best
    v = np.exp(2j * np.pi * levels / L) / np.sqrt(M)
    return PhaseProfile(v, "discrete", L, levels, tuple(parts or ()), obj,
                        diagnostics={"traces": traces, "starts": len(inits)})


def sdr_phase_problem(Q):
    """Real SDP of the relaxed phase problem (minimize ``-tr(Q V)``)."""
    M = Q.shape[0]
    prob = SdpProblem()
    b = prob.add_block("psd", 2 * M)
    prob.set_objective(b, -0.5 * hermitian_embed(Q))
    for m in range(M):
        E = np.zeros((2 * M, 2 * M))
        E[m, m] = E[M + m, M + m] = 1.0
        prob.add_constraint({b: E}, "=", 2.0 / M)
    return prob


def stage1_continuous(channels, inv_beta, rng, n_trials=100, parts=None, tol=1e-8, backend="ipm"):
    """Continuous phase design by relaxation and randomization."""
    Q = objective_matrix(channels, inv_beta, parts)
    M = Q.shape[0]
    scale = float(np.abs(Q).max())
    if scale == 0.0:
        v = np.ones(M, complex) / np.sqrt(M)
        return PhaseProfile(v, "continuous", partition=tuple(parts or ()), objective=0.0, sdr_bound=0.0)
    Qs = Q / scale
    sol = get_backend(backend)(sdr_phase_problem(Qs), tol=tol)
    if sol.status != "optimal":
        raise SolverError(f"phase relaxation ended with status {sol.status}", sol)
    V = hermitian_unembed(sol.x[0])
    # the dual side is the certified upper bound when the iterate is not exact
    bound = -min(sol.primal_objective, sol.dual_objective) * scale

    def shaper(x):
        mag = np.abs(x)
        x = np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 1.0)
        return x / np.sqrt(M)

    def scorer(x):
        return -phase_objective(Qs, x), 0.0

    res = gaussian_randomize(V, n_trials, shaper, scorer, rng)
    return PhaseProfile(res.x, "continuous", partition=tuple(parts or ()),
                        objective=-res.cost * scale, sdr_bound=bound,
                        diagnostics={"sdr_iterations": sol.iterations, "rank_one": res.rank_one,
                                     "trials": res.trials})


def random_phase(M, rng, parts=None):
    theta = rng.uniform(0.0, 2.0 * np.pi, M)
    return PhaseProfile(np.exp(1j * theta) / np.sqrt(M), "random", partition=tuple(parts or ()))


def identity_phase(M, parts=None):
    return PhaseProfile(np.ones(M, complex) / np.sqrt(M), "identity", partition=tuple(parts or ()))
