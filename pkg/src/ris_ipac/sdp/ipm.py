"""Primal-dual interior-point method for block SDPs.

Infeasible-start path following with the HKM search direction and a
Mehrotra predictor-corrector. Inequalities become equalities through one
nonnegative slack segment. Constraint rows are normalized and the
objective and right-hand side rescaled before iterating; all reported
quantities are in the caller's units.
"""
import logging

import numpy as np
import scipy.linalg as sla

from .problem import SdpSolution

log = logging.getLogger(__name__)


class _Data:
    """Problem data regrouped for batched linear algebra."""

    def __init__(self, problem):
        self.problem = problem
        m = problem.n_constraints
        self.m = m
        n_slack = sum(c.relation != "=" for c in problem.constraints)

        # psd blocks grouped by size
        sizes = {}
        for b, (kind, size) in enumerate(problem.blocks):
            if kind == "psd":
                sizes.setdefault(size, []).append(b)
        self.groups = []
        self.where = {}
        for size, ids in sorted(sizes.items()):
            gi = len(self.groups)
            A = np.zeros((m, len(ids), size, size))
            C = np.zeros((len(ids), size, size))
            for pos, b in enumerate(ids):
                self.where[b] = ("psd", gi, pos)
                if b in problem.objective:
                    C[pos] = problem.objective[b]
            self.groups.append({"size": size, "ids": ids, "A": A, "C": C})

        # nonneg blocks + slack segment
        offset = 0
        for b, (kind, size) in enumerate(problem.blocks):
            if kind == "nonneg":
                self.where[b] = ("lin", offset, size)
                offset += size
        self.n_user_lin = offset
        p = offset + n_slack
        self.A_l = np.zeros((m, p))
        self.c_l = np.zeros(p)
        for b, (kind, size) in enumerate(problem.blocks):
            if kind == "nonneg" and b in problem.objective:
                _, off, sz = self.where[b]
                self.c_l[off:off + sz] = problem.objective[b]

        self.b = np.zeros(m)
        slack = offset
        for i, con in enumerate(problem.constraints):
            self.b[i] = con.rhs
            for b, a in con.coefficients.items():
                w = self.where[b]
                if w[0] == "psd":
                    self.groups[w[1]]["A"][i, w[2]] = a
                else:
                    self.A_l[i, w[1]:w[1] + w[2]] = a
            if con.relation == "<=":
                self.A_l[i, slack] = 1.0
                slack += 1
            elif con.relation == ">=":
                self.A_l[i, slack] = -1.0
                slack += 1
        self.nu = sum(g["size"] * len(g["ids"]) for g in self.groups) + p

    # -- scaling ---------------------------------------------------------
    def row_norms(self):
        sq = (self.A_l ** 2).sum(axis=1)
        for g in self.groups:
            sq += (g["A"] ** 2).sum(axis=(1, 2, 3))
        return np.sqrt(sq)

    def scaled(self, keep):
        """Copy with rows ``keep`` normalized and data rescaled."""
        s = object.__new__(_Data)
        s.problem, s.where, s.n_user_lin, s.nu = self.problem, self.where, self.n_user_lin, self.nu
        d = self.row_norms()[keep]
        s.m = int(keep.sum())
        s.d = d
        s.A_l = self.A_l[keep] / d[:, None]
        b = self.b[keep] / d
        s.b_scale = max(1.0, float(np.linalg.norm(b)))
        s.b = b / s.b_scale
        c_norm = np.sqrt((self.c_l ** 2).sum() + sum((g["C"] ** 2).sum() for g in self.groups))
        s.c_scale = max(1.0, float(c_norm))
        s.c_l = self.c_l / s.c_scale
        s.groups = []
        for g in self.groups:
            s.groups.append({
                "size": g["size"], "ids": g["ids"],
                "A": g["A"][keep] / d[:, None, None, None],
                "C": g["C"] / s.c_scale,
            })
        return s

    # -- linear maps -----------------------------------------------------
    def A_op(self, X, xl):
        out = self.A_l @ xl
        for g, Xg in zip(self.groups, X):
            out = out + np.einsum("mbij,bij->m", g["A"], Xg)
        return out

    def AT_op(self, y):
        return ([np.einsum("m,mbij->bij", y, g["A"]) for g in self.groups], self.A_l.T @ y)

    def objective(self, X, xl):
        return float(self.c_l @ xl + sum(np.sum(g["C"] * Xg) for g, Xg in zip(self.groups, X)))


def _inner(X, xl, S, sl):
    return float(xl @ sl + sum(np.sum(a * b) for a, b in zip(X, S)))


def _sym(Z):
    return 0.5 * (Z + np.swapaxes(Z, -1, -2))


def _max_step(X, xl, dX, dxl):
    alpha = np.inf
    for Xg, dg in zip(X, dX):
        try:
            Li = np.linalg.inv(np.linalg.cholesky(Xg))
        except np.linalg.LinAlgError:
            # roundoff pushed an eigenvalue to zero; use a clipped eigen-root
            lam_x, V = np.linalg.eigh(Xg)
            lam_x = np.maximum(lam_x, 1e-300)
            Li = np.swapaxes(V, -1, -2) / np.sqrt(lam_x)[..., :, None]
        lam = np.linalg.eigvalsh(_sym(Li @ dg @ np.swapaxes(Li, -1, -2))).min()
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    neg = dxl < 0
    if neg.any():
        alpha = min(alpha, float(np.min(-xl[neg] / dxl[neg])))
    return alpha


def _safe_inverse(S):
    """Inverse of a batch of PD matrices, flooring eigenvalues at roundoff level."""
    lam, V = np.linalg.eigh(_sym(S))
    lam = np.maximum(lam, 1e-15 * np.abs(lam).max(axis=-1, keepdims=True))
    return _sym((V / lam[..., None, :]) @ np.swapaxes(V, -1, -2))


def _is_pd(X, xl):
    if np.any(xl <= 0):
        return False
    try:
        for Xg in X:
            np.linalg.cholesky(Xg)
    except np.linalg.LinAlgError:
        return False
    return True


def _interior_update(X, xl, dX, dxl, alpha, shrink=0.8, tries=30):
    """Take the step, shortening it while roundoff leaves the cone interior."""
    for _ in range(tries):
        Xn = [Xg + alpha * d for Xg, d in zip(X, dX)]
        xn = xl + alpha * dxl
        if _is_pd(Xn, xn):
            return Xn, xn, alpha
        alpha *= shrink
    return None


def _norm(X, xl):
    return float(np.sqrt(xl @ xl + sum(np.sum(a * a) for a in X)))


def solve(problem, tol=1e-8, max_iter=100, step_fraction=0.98):
    """Solve an :class:`SdpProblem`.

    Parameters
    ----------
    problem : SdpProblem
    tol : float
        Target for relative duality gap and relative residuals.
    max_iter : int
    step_fraction : float
        Fraction of the distance to the cone boundary taken per step.

    Returns
    -------
    SdpSolution
        ``status`` is one of ``optimal``, ``infeasible`` (primal),
        ``unbounded`` (dual infeasible) or ``max_iter``.
    """
    problem.check()
    raw = _Data(problem)
    norms = raw.row_norms()
    keep = norms > 0
    diagnostics = {"ridge": [], "dropped_rows": [int(i) for i in np.flatnonzero(~keep)]}
    if np.any((~keep) & (raw.b != 0)):
        return _trivial_infeasible(problem, raw, diagnostics)
    data = raw.scaled(keep)
    m = data.m

    b_norm = float(np.linalg.norm(raw.b))
    c_norm = float(np.sqrt((raw.c_l ** 2).sum() + sum((g["C"] ** 2).sum() for g in raw.groups)))

    # identity-scaled interior start
    X, S = [], []
    for g in data.groups:
        n = g["size"]
        a_norm = np.sqrt((g["A"] ** 2).sum(axis=(2, 3)))                 # (m, nb)
        c_blk = np.sqrt((g["C"] ** 2).sum(axis=(1, 2)))                  # (nb,)
        if m:
            xi = np.maximum(np.max(n * (1 + np.abs(data.b))[:, None] / (1 + a_norm), axis=0), 10.0)
            eta = np.maximum(np.maximum(a_norm.max(axis=0), c_blk), 10.0)
        else:
            xi = eta = np.full(len(g["ids"]), 10.0)
        xi = np.maximum(xi, np.sqrt(n))
        eta = np.maximum(eta, np.sqrt(n))
        eye = np.eye(n)
        X.append(xi[:, None, None] * eye)
        S.append(eta[:, None, None] * eye)
    p = data.A_l.shape[1]
    if p:
        a_l = np.abs(data.A_l).max(axis=0) if m else np.zeros(p)
        xl = np.full(p, max(10.0, float(np.max(1 + np.abs(data.b))) if m else 10.0))
        sl = np.maximum(10.0, np.maximum(a_l, np.abs(data.c_l)))
    else:
        xl, sl = np.zeros(0), np.zeros(0)
    y = np.zeros(m)

    history = []
    status = "max_iter"
    stall = 0
    it = 0
    metrics = None
    best, best_it = None, 0
    for it in range(max_iter + 1):
        AX = data.A_op(X, xl)
        rp = data.b - AX
        ATy, ATy_l = data.AT_op(y)
        Rd = [g["C"] - a - s for g, a, s in zip(data.groups, ATy, S)]
        rd_l = data.c_l - ATy_l - sl
        pobj_s = data.objective(X, xl)
        dobj_s = float(data.b @ y)
        mu = _inner(X, xl, S, sl) / data.nu

        scale = data.b_scale * data.c_scale
        pobj, dobj = scale * pobj_s, scale * dobj_s
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pres = float(np.linalg.norm(rp * data.d)) * data.b_scale / (1 + b_norm)
        dres = data.c_scale * _norm(Rd, rd_l) / (1 + c_norm)
        gap_s = abs(pobj_s - dobj_s) / (1 + abs(pobj_s) + abs(dobj_s))
        pres_s = float(np.linalg.norm(rp)) / (1 + float(np.linalg.norm(data.b)))
        dres_s = _norm(Rd, rd_l) / (1 + np.sqrt(np.sum(data.c_l**2) + sum(np.sum(g["C"]**2) for g in data.groups)))
        metrics = (pobj, dobj, gap, pres, dres)
        entry = {"iteration": it, "primal_objective": pobj, "dual_objective": dobj,
                 "gap": gap, "primal_residual": pres, "dual_residual": dres,
                 "complementarity": scale * mu * data.nu}
        history.append(entry)
        score = max(gap, pres, dres)
        if best is None or score < best[0]:
            best = (score, X, xl, y, S, sl, metrics)
            best_it = it
        elif it - best_it > 15:
            diagnostics["stalled"] = True
            break

        if max(gap, pres, dres) <= tol and max(gap_s, pres_s, dres_s) <= tol:
            status = "optimal"
            break
        # infeasibility certificates
        if dobj_s > 0:
            cert = _norm([a + s for a, s in zip(ATy, S)], ATy_l + sl)
            if cert / dobj_s < tol and pres_s > tol:
                status = "infeasible"
                break
        if pobj_s < 0:
            if float(np.linalg.norm(AX)) / -pobj_s < tol and dres_s > tol:
                status = "unbounded"
                break
        if it == max_iter:
            break

        # --- Newton system --------------------------------------------
        Sinv = [_safe_inverse(s) for s in S]
        M = np.zeros((m, m))
        for g, Xg, Si in zip(data.groups, X, Sinv):
            A = g["A"]
            T = Xg[None] @ A @ Si[None]                                   # (m, nb, n, n)
            M += A.reshape(m, -1) @ np.swapaxes(T, -1, -2).reshape(m, -1).T
        if p:
            M += (data.A_l * (xl / sl)) @ data.A_l.T
        M = 0.5 * (M + M.T)
        factor = _factor(M, diagnostics, it)

        XRdSi = [Xg @ r @ si for Xg, r, si in zip(X, Rd, Sinv)]
        base_rhs = rp + data.A_op(XRdSi, xl * rd_l / sl)

        def direction(Z, zl):
            rhs = base_rhs - data.A_op(Z, zl)
            dy = _backsolve(factor, rhs)
            ATdy, ATdy_l = data.AT_op(dy)
            dS = [r - a for r, a in zip(Rd, ATdy)]
            ds_l = rd_l - ATdy_l
            dX = [_sym(z - Xg @ d @ si) for z, Xg, d, si in zip(Z, X, dS, Sinv)]
            dx_l = zl - xl * ds_l / sl
            return dX, dx_l, dy, dS, ds_l

        # predictor
        dXa, dxa, dya, dSa, dsa = direction([-Xg for Xg in X], -xl)
        ap = min(1.0, _max_step(X, xl, dXa, dxa))
        ad = min(1.0, _max_step(S, sl, dSa, dsa))
        mu_aff = _inner([Xg + ap * d for Xg, d in zip(X, dXa)], xl + ap * dxa,
                        [s + ad * d for s, d in zip(S, dSa)], sl + ad * dsa) / data.nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector
        Z = []
        for Xg, s, si, dx, ds in zip(X, S, Sinv, dXa, dSa):
            rc = sigma * mu * np.eye(s.shape[-1]) - Xg @ s - dx @ ds
            Z.append(rc @ si)
        zl = (sigma * mu - xl * sl - dxa * dsa) / sl
        dX, dx_l, dy, dS, ds_l = direction(Z, zl)
        ap = min(1.0, step_fraction * _max_step(X, xl, dX, dx_l))
        ad = min(1.0, step_fraction * _max_step(S, sl, dS, ds_l))
        entry["step_primal"], entry["step_dual"], entry["sigma"] = ap, ad, sigma

        primal = _interior_update(X, xl, dX, dx_l, ap)
        dual = _interior_update(S, sl, dS, ds_l, ad)
        if primal is None or dual is None:
            diagnostics["stalled"] = True
            break
        X, xl, ap = primal
        S, sl, ad = dual
        y = y + ad * dy
        stall = stall + 1 if max(ap, ad) < 1e-9 else 0
        if stall >= 3:
            diagnostics["stalled"] = True
            break

    if status in ("max_iter",) and best is not None:
        # report the iterate closest to optimality, not the last one
        _, X, xl, y, S, sl, metrics = best
        diagnostics["best_iteration"] = int(np.argmin([max(h["gap"], h["primal_residual"], h["dual_residual"])
                                                        for h in history]))

    # -- unscale ---------------------------------------------------------
    y_full = np.zeros(raw.m)
    y_full[keep] = data.c_scale * y / data.d
    xs, ss = [None] * len(problem.blocks), [None] * len(problem.blocks)
    for b, w in data.where.items():
        if w[0] == "psd":
            xs[b] = data.b_scale * X[w[1]][w[2]]
            ss[b] = data.c_scale * S[w[1]][w[2]]
        else:
            xs[b] = data.b_scale * xl[w[1]:w[1] + w[2]]
            ss[b] = data.c_scale * sl[w[1]:w[1] + w[2]]
    diagnostics["slack"] = (data.b_scale * xl[data.n_user_lin:]).tolist()
    pobj, dobj, gap, pres, dres = metrics
    if status != "optimal":
        log.debug("SDP solve ended with status %s after %d iterations", status, it)
    return SdpSolution(xs, y_full, ss, status, pobj, dobj, gap, pres, dres, it, history, diagnostics)


def _factor(M, diagnostics, it):
    try:
        return ("chol", sla.cho_factor(M, lower=True, check_finite=False))
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    ridge = 1e-12 * max(float(np.trace(M)), 1e-300)
    for _ in range(8):
        try:
            f = sla.cho_factor(M + ridge * np.eye(len(M)), lower=True, check_finite=False)
            diagnostics["ridge"].append({"iteration": it, "ridge": ridge})
            log.debug("Schur matrix regularized with ridge %.3g at iteration %d", ridge, it)
            return ("chol", f)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            ridge *= 100.0
    diagnostics["ridge"].append({"iteration": it, "ridge": "lstsq"})
    return ("lstsq", M)


def _backsolve(factor, rhs):
    kind, f = factor
    if kind == "chol":
        return sla.cho_solve(f, rhs, check_finite=False)
    return np.linalg.lstsq(f, rhs, rcond=None)[0]


def _trivial_infeasible(problem, raw, diagnostics):
    xs = []
    for kind, size in problem.blocks:
        xs.append(np.zeros((size, size)) if kind == "psd" else np.zeros(size))
    return SdpSolution(xs, np.zeros(raw.m), [x.copy() for x in xs], "infeasible",
                       np.nan, np.nan, np.inf, np.inf, np.inf, 0, [], diagnostics)
