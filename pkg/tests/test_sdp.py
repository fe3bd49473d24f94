"""Block SDP solver, Hermitian embedding and Gaussian randomization."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ris_ipac.errors import InvalidArgumentError, NoFeasibleCandidateError
from ris_ipac.sdp import (SdpProblem, bundled_problems, gaussian_randomize, get_backend,
                          hermitian_embed, hermitian_unembed, principal_vector, real_functional,
                          register_backend, sample_cn, solve)


def _hermitian(rng, d, psd=False):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return A @ A.conj().T if psd else 0.5 * (A + A.conj().T)


# --- small problems with known optima --------------------------------------------

def test_trace_min_fixed_corner():
    p = SdpProblem()
    x = p.add_block("psd", 2)
    p.set_objective(x, np.eye(2))
    p.add_constraint({x: [[1, 0], [0, 0]]}, "=", 1.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert abs(sol.primal_objective - 1.0) < 1e-7
    np.testing.assert_allclose(sol.x[x], [[1, 0], [0, 0]], atol=1e-6)


def test_lp_lower_bound():
    p = SdpProblem()
    x = p.add_block("nonneg", 1)
    p.set_objective(x, [1.0])
    p.add_constraint({x: [1.0]}, ">=", 3.0)
    sol = solve(p)
    assert sol.status == "optimal" and abs(sol.primal_objective - 3.0) < 1e-7


@pytest.mark.parametrize("seed", range(4))
def test_lambda_max_dual(seed):
    # max <S, X> s.t. tr X = 1, X >= 0 equals lambda_max(S)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4))
    S = A + A.T
    p = SdpProblem()
    x = p.add_block("psd", 4)
    p.set_objective(x, -S)
    p.add_constraint({x: np.eye(4)}, "=", 1.0)
    sol = solve(p)
    assert sol.status == "optimal"
    assert abs(-sol.primal_objective - np.linalg.eigvalsh(S).max()) < 1e-7


def test_bundled_problems_solve_to_tolerance():
    probs = bundled_problems()
    assert len(probs) == 25
    for name, prob, opt in probs:
        sol = solve(prob)
        assert sol.status == "optimal", name
        assert abs(sol.primal_objective - opt) / max(1.0, abs(opt)) < 1e-6, name
        assert sol.gap < 1e-7, name


def test_weak_duality_on_feasible_iterates():
    for _, prob, _ in bundled_problems(per_family=2):
        sol = solve(prob)
        for h in sol.history:
            if max(h["primal_residual"], h["dual_residual"]) < 1e-10:
                scale = 1 + abs(h["primal_objective"]) + abs(h["dual_objective"])
                assert h["primal_objective"] >= h["dual_objective"] - 1e-9 * scale


def test_infeasible_status():
    p = SdpProblem()
    x = p.add_block("psd", 2)
    p.set_objective(x, np.eye(2))
    p.add_constraint({x: np.eye(2)}, "=", -1.0)
    assert solve(p).status == "infeasible"


def test_zero_row_with_nonzero_rhs_is_infeasible():
    p = SdpProblem()
    x = p.add_block("nonneg", 2)
    p.set_objective(x, [1.0, 1.0])
    p.add_constraint({x: [0.0, 0.0]}, "=", 1.0)
    sol = solve(p)
    assert sol.status == "infeasible" and sol.diagnostics["dropped_rows"] == [0]


def test_unbounded_status():
    p = SdpProblem()
    x = p.add_block("nonneg", 2)
    p.set_objective(x, [-1.0, 0.0])
    p.add_constraint({x: [0.0, 1.0]}, "=", 1.0)
    assert solve(p).status == "unbounded"


def test_problem_validation():
    p = SdpProblem()
    with pytest.raises(InvalidArgumentError):
        p.add_block("cone", 2)
    x = p.add_block("psd", 2)
    with pytest.raises(InvalidArgumentError):
        p.set_objective(x, np.eye(3))
    with pytest.raises(InvalidArgumentError):
        p.add_constraint({x: np.eye(2)}, "<", 1.0)
    p.set_objective(x, [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        p.check()


def test_dump_load_round_trip(tmp_path):
    _, prob, opt = bundled_problems(per_family=1)[2]
    path = tmp_path / "p.json"
    prob.dump(path)
    back = SdpProblem.load(path)
    assert back.to_dict() == prob.to_dict()
    assert abs(solve(back).primal_objective - solve(prob).primal_objective) < 1e-12


def test_backend_registry(monkeypatch):
    import ris_ipac.sdp as sdp

    monkeypatch.setattr(sdp, "_BACKENDS", dict(sdp._BACKENDS))
    assert get_backend() is solve
    register_backend("ipm_alias", solve)
    assert get_backend("ipm_alias") is solve
    with pytest.raises(KeyError, match="unknown SDP backend"):
        get_backend("missing")


# --- Hermitian embedding -------------------------------------------------------

def test_embed_examples():
    np.testing.assert_array_equal(hermitian_embed([[2.0]]), [[2, 0], [0, 2]])
    np.testing.assert_array_equal(hermitian_embed([[0, 1j], [-1j, 0]]),
                                  [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]])
    with pytest.raises(InvalidArgumentError):
        hermitian_embed([[0, 1], [0, 0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_embed_is_isomorphism(seed, d):
    rng = np.random.default_rng(seed)
    H, W = _hermitian(rng, d), _hermitian(rng, d, psd=True)
    E, F = hermitian_embed(H), hermitian_embed(W)
    np.testing.assert_allclose(hermitian_unembed(E), H, atol=1e-12)
    assert np.isclose(np.trace(E @ F) / 2, np.trace(H @ W).real, rtol=1e-10, atol=1e-10)
    assert np.isclose(np.sum(real_functional(H) * F), np.trace(H @ W).real, rtol=1e-10, atol=1e-10)
    lam, mu = np.linalg.eigvalsh(H), np.linalg.eigvalsh(E)
    np.testing.assert_allclose(np.sort(np.repeat(lam, 2)), mu, atol=1e-10)
    assert np.linalg.eigvalsh(F).min() >= -1e-10 * np.trace(F)


def test_complex_trace_min_via_embedding():
    # min tr W s.t. Re tr(h h^H W) >= 1 has optimum 1 / ||h||^2
    h = np.array([1.0 + 1j, 0.5 - 2j])
    p = SdpProblem()
    x = p.add_block("psd", 4)
    p.set_objective(x, real_functional(np.eye(2)))
    p.add_constraint({x: real_functional(np.outer(h, h.conj()))}, ">=", 1.0)
    sol = solve(p)
    assert abs(sol.primal_objective - 1 / np.vdot(h, h).real) < 1e-7
    W = hermitian_unembed(sol.x[x])
    v, ratio = principal_vector(W)
    assert ratio < 1e-6
    assert abs(abs(np.vdot(v, h)) / (np.linalg.norm(v) * np.linalg.norm(h)) - 1) < 1e-6


# --- randomization -----------------------------------------------------------------

def test_sample_covariance_monte_carlo():
    rng = np.random.default_rng(5)
    X = _hermitian(rng, 3, psd=True)
    z = sample_cn(X, 100_000, rng)
    emp = z.T @ z.conj() / len(z)
    assert np.abs(emp - X).max() <= 0.02 * np.abs(X).max()


def test_rank_one_shortcut_skips_sampling():
    x = np.array([1.0, 1j, -1.0])
    X = np.outer(x, x.conj())
    res = gaussian_randomize(X, 10, lambda v: v, lambda v: (np.vdot(v, v).real, 0.0),
                             np.random.default_rng(0))
    assert res.rank_one and res.trials == 0
    assert abs(abs(np.vdot(res.x, x)) - 3.0) < 1e-12


def test_randomize_picks_cheapest_feasible():
    rng = np.random.default_rng(1)
    X = _hermitian(rng, 3, psd=True)
    res = gaussian_randomize(X, 50, lambda v: v, lambda v: (np.linalg.norm(v), 1.0 - np.linalg.norm(v)),
                             np.random.default_rng(2))
    feasible = [c for c, viol in res.scores if viol <= 0]
    assert not res.rank_one and res.cost == min(feasible) and np.linalg.norm(res.x) >= 1.0


def test_randomize_errors():
    X = np.diag([1.0, 0.5]).astype(complex)
    with pytest.raises(InvalidArgumentError):
        gaussian_randomize(X, 0, lambda v: v, lambda v: (0.0, 0.0), np.random.default_rng(0))
    with pytest.raises(NoFeasibleCandidateError) as exc:
        gaussian_randomize(X, 1, lambda v: v, lambda v: (0.0, 1.0), np.random.default_rng(0))
    assert exc.value.violation == 1.0 and exc.value.best is not None
