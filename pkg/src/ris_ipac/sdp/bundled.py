"""Regression SDPs with analytically known optima.

Five families, five seeded instances each:

* ``trace_min``  min tr X  s.t. X_11 = a           -> a
* ``diag_weight`` min <D, X> s.t. X_ii = 1          -> tr D  (D diagonal >= 0)
* ``lambda_max``  min t s.t. t I - S >= 0           -> lambda_max(S)
* ``lp``          min c^T x s.t. x >= l, sum x <= u -> c^T l (c > 0)
* ``mrt``         min tr W s.t. g^T W g >= beta     -> beta / |g|^2
"""
import numpy as np

from .problem import SdpProblem


def _trace_min(rng):
    n = int(rng.integers(2, 6))
    a = float(rng.uniform(0.5, 5.0))
    p = SdpProblem()
    b = p.add_block("psd", n)
    p.set_objective(b, np.eye(n))
    E = np.zeros((n, n))
    E[0, 0] = 1.0
    p.add_constraint({b: E}, "=", a)
    return p, a


def _diag_weight(rng):
    n = int(rng.integers(2, 6))
    d = rng.uniform(0.1, 3.0, n)
    p = SdpProblem()
    b = p.add_block("psd", n)
    p.set_objective(b, np.diag(d))
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        p.add_constraint({b: E}, "=", 1.0)
    return p, float(d.sum())


def _lambda_max(rng):
    n = int(rng.integers(2, 6))
    S = rng.standard_normal((n, n))
    S = 0.5 * (S + S.T)
    # t = shift + t', t' >= 0, with shift a lower bound on lambda_max
    shift = -float(np.linalg.norm(S))
    p = SdpProblem()
    z = p.add_block("psd", n)
    t = p.add_block("nonneg", 1)
    p.set_objective(t, [1.0])
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            coef = 2.0 if i != j else 1.0
            # <E, Z> - coef * t' [i == j] = coef * (shift delta_ij - S_ij)
            rhs = coef * ((shift if i == j else 0.0) - S[i, j])
            p.add_constraint({z: E, t: [-1.0 if i == j else 0.0]}, "=", rhs)
    return p, float(np.linalg.eigvalsh(S).max()) - shift


def _lp(rng):
    n = int(rng.integers(2, 6))
    c = rng.uniform(0.5, 2.0, n)
    low = rng.uniform(0.0, 2.0, n)
    p = SdpProblem()
    x = p.add_block("nonneg", n)
    p.set_objective(x, c)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        p.add_constraint({x: e}, ">=", low[i])
    p.add_constraint({x: np.ones(n)}, "<=", float(low.sum()) + 5.0)
    return p, float(c @ low)


def _mrt(rng):
    n = int(rng.integers(2, 6))
    g = rng.standard_normal(n)
    beta = float(rng.uniform(0.5, 4.0))
    p = SdpProblem()
    w = p.add_block("psd", n)
    p.set_objective(w, np.eye(n))
    p.add_constraint({w: np.outer(g, g)}, ">=", beta)
    return p, beta / float(g @ g)


FAMILIES = {
    "trace_min": _trace_min,
    "diag_weight": _diag_weight,
    "lambda_max": _lambda_max,
    "lp": _lp,
    "mrt": _mrt,
}


def bundled_problems(per_family=5, seed=2024):
    """List of ``(name, problem, optimum)``.

    For ``lambda_max`` the stored optimum is ``lambda_max(S) - shift``, the
    optimal value of the shifted variable.
    """
    out = []
    for fi, (name, make) in enumerate(FAMILIES.items()):
        for i in range(per_family):
            rng = np.random.default_rng([seed, fi, i])
            prob, opt = make(rng)
            out.append((f"{name}_{i}", prob, opt))
    return out
