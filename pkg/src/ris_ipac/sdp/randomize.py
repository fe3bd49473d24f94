"""Gaussian randomization for rank-one extraction from SDR solutions."""
from typing import NamedTuple

import numpy as np

from ..errors import InvalidArgumentError, NoFeasibleCandidateError


class RandomizationResult(NamedTuple):
    x: np.ndarray
    cost: float
    violation: float
    trials: int
    rank_one: bool
    scores: list


def psd_sqrt(X):
    """Hermitian square root with negative eigenvalues clipped to zero."""
    lam, U = np.linalg.eigh(0.5 * (X + np.conj(np.swapaxes(X, -1, -2))))
    return (U * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


def sample_cn(X, n_samples, rng):
    """Draw ``n_samples`` vectors from CN(0, X). Returns shape (n_samples, d)."""
    X = np.asarray(X, complex)
    d = X.shape[-1]
    z = (rng.standard_normal((n_samples, d)) + 1j * rng.standard_normal((n_samples, d))) / np.sqrt(2.0)
    return z @ psd_sqrt(X).T


def principal_vector(X):
    """``sqrt(lambda_1) u_1`` and the ratio ``lambda_2 / lambda_1``."""
    lam, U = np.linalg.eigh(0.5 * (X + np.conj(X).T))
    top = lam[-1]
    if top <= 0:
        return np.zeros(X.shape[0], complex), np.inf
    ratio = max(lam[-2], 0.0) / top if len(lam) > 1 else 0.0
    return np.sqrt(top) * U[:, -1], ratio


def gaussian_randomize(X_star, n_trials, shaper, scorer, rng, include_principal=True, rank_tol=1e-8):
    """Pick the best shaped candidate drawn from CN(0, X*).

    Parameters
    ----------
    X_star : (d, d) complex ndarray
        PSD relaxation solution.
    n_trials : int
        Number of Gaussian draws.
    shaper : callable
        Maps a raw draw onto the feasible set's shape (unit-modulus
        projection, power rescaling, ...).
    scorer : callable
        Returns ``(cost, violation)`` for a shaped candidate; a candidate is
        feasible when ``violation <= 0``. Lower cost wins.
    rng : numpy.random.Generator
    include_principal : bool
        Also score the shaped principal eigenvector.
    rank_tol : float
        If ``lambda_2 / lambda_1 < rank_tol`` the principal eigenvector is
        returned without sampling.

    Raises
    ------
    NoFeasibleCandidateError
        Nothing feasible among the candidates; carries the least-violating one.
    """
    if n_trials < 1:
        raise InvalidArgumentError("n_trials must be >= 1")
    X_star = np.asarray(X_star, complex)
    v, ratio = principal_vector(X_star)
    if ratio < rank_tol:
        x = shaper(v)
        cost, viol = scorer(x)
        if viol > 0:
            raise NoFeasibleCandidateError("principal vector of a rank-one solution is infeasible", x, viol)
        return RandomizationResult(x, float(cost), float(viol), 0, True, [(cost, viol)])

    candidates = list(sample_cn(X_star, n_trials, rng))
    if include_principal:
        candidates.append(v)
    best, best_bad = None, None
    scores = []
    for raw in candidates:
        x = shaper(raw)
        cost, viol = scorer(x)
        scores.append((cost, viol))
        if viol <= 0:
            if best is None or cost < best[1]:
                best = (x, cost, viol)
        elif best_bad is None or viol < best_bad[2]:
            best_bad = (x, cost, viol)
    if best is None:
        raise NoFeasibleCandidateError(
            f"no feasible candidate among {len(candidates)} draws",
            best_bad[0], best_bad[2],
        )
    return RandomizationResult(best[0], float(best[1]), float(best[2]), n_trials, False, scores)
