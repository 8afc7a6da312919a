import numpy as np
import pytest
import scipy.sparse as sp
from types import SimpleNamespace

from risksvm.solver import (
    INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED, SolverSettings, kkt_residuals, objective_value, solve,
)


def qp(P, q, A, l, u):
    return SimpleNamespace(P=sp.csc_matrix(np.atleast_2d(P)), q=np.asarray(q, float),
                           A=sp.csc_matrix(np.atleast_2d(A)), l=np.asarray(l, float), u=np.asarray(u, float))


def random_qp(rng, n=None, m=None, pd=True):
    n = n or int(rng.integers(2, 31))
    m = m or int(rng.integers(1, 61))
    M = rng.normal(size=(n, n))
    P = M.T @ M / n + (0.1 * np.eye(n) if pd else 0)
    q = rng.normal(size=n) * 3
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.6)
    x0 = rng.normal(size=n)
    Ax0 = A @ x0
    l = Ax0 - rng.exponential(size=m)
    u = Ax0 + rng.exponential(size=m)
    kind = rng.random(m)
    l[kind < 0.2] = -np.inf
    u[(kind >= 0.2) & (kind < 0.4)] = np.inf
    eq = kind > 0.93
    l[eq] = u[eq] = Ax0[eq]
    return qp(P, q, A, l, u)


def dual_oracle(prob, iters=60000):
    """Accelerated projected gradient on the dual of a strictly convex QP.

    Dual variables are the upper and lower bound multipliers; both are
    kept nonnegative, and those of infinite bounds are pinned to zero.
    """
    P, q, A = prob.P.toarray(), prob.q, prob.A.toarray()
    Pinv = np.linalg.inv(P)
    B = np.vstack([A, -A])
    c = np.concatenate([prob.u, -prob.l])
    free = np.isfinite(c)
    c = np.where(free, c, 0.0)
    H = B @ Pinv @ B.T
    L = np.linalg.eigvalsh(H).max() * 1.0001
    lam = np.zeros(B.shape[0])
    prev, t = lam.copy(), 1.0
    y = lam.copy()

    def value(lam):
        r = q + B.T @ lam
        return -0.5 * r @ Pinv @ r - c @ lam

    for _ in range(iters):
        grad = -(B @ (Pinv @ (q + B.T @ y))) - c
        new = np.where(free, np.maximum(y + grad / L, 0.0), 0.0)
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if value(new) < value(lam):  # adaptive restart
            t_next, y = 1.0, lam.copy()
            continue
        y = new + (t - 1) / t_next * (new - lam)
        lam, t = new, t_next
    x = -Pinv @ (q + B.T @ lam)
    return value(lam), x


def assert_certified(prob, sol, tol=1e-6):
    primal, dual, comp = kkt_residuals(prob, sol)
    assert sol.status == OPTIMAL
    assert max(primal, dual, comp) <= tol, (primal, dual, comp)


class TestExamples:
    def test_bound(self):
        prob = qp([[2.0]], [0.0], [[1.0]], [1.0], [np.inf])
        sol = solve(prob)
        assert sol.x == pytest.approx([1.0], abs=1e-9)
        # P x + q + A^T y = 0, so an active lower bound has a negative multiplier
        assert sol.y == pytest.approx([-2.0], abs=1e-8)
        assert_certified(prob, sol, 1e-10)

    def test_equality(self):
        prob = qp(np.eye(2), [0, 0], [[1.0, 1.0]], [1.0], [1.0])
        sol = solve(prob)
        assert sol.x == pytest.approx([0.5, 0.5], abs=1e-9)
        assert_certified(prob, sol, 1e-10)

    def test_exact_solution_residuals(self):
        prob = qp([[2.0]], [0.0], [[1.0]], [1.0], [np.inf])
        exact = SimpleNamespace(x=np.array([1.0]), y=np.array([-2.0]))
        assert max(kkt_residuals(prob, exact)) <= 1e-12

    def test_perturbation_detected(self):
        prob = qp(np.eye(2), [0, 0], [[1.0, 1.0]], [1.0], [1.0])
        sol = solve(prob)
        bad = SimpleNamespace(x=sol.x + 0.1, y=sol.y)
        assert kkt_residuals(prob, bad)[0] >= 0.1 - 1e-12

    def test_unconstrained(self):
        prob = SimpleNamespace(P=sp.eye(3, format="csc"), q=np.array([1.0, -2, 3]),
                               A=sp.csc_matrix((0, 3)), l=np.zeros(0), u=np.zeros(0))
        sol = solve(prob)
        assert sol.x == pytest.approx([-1, 2, -3], abs=1e-10)

    def test_linear_program(self):
        # min x1 + x2 on the simplex-like set x >= 0, x1 + 2 x2 >= 2
        prob = qp(np.zeros((2, 2)), [1, 1], [[1, 0], [0, 1], [1, 2]], [0, 0, 2], [np.inf] * 3)
        sol = solve(prob)
        assert sol.objective == pytest.approx(1.0, abs=1e-8)
        assert sol.x == pytest.approx([0, 1], abs=1e-7)


class TestCertificates:
    def test_infeasible(self):
        prob = qp(np.eye(1), [0.0], [[1.0], [1.0]], [1.0, -np.inf], [np.inf, 0.0])
        assert solve(prob).status == INFEASIBLE

    def test_unbounded(self):
        prob = qp(np.zeros((2, 2)), [-1.0, 0.0], [[0.0, 1.0]], [0.0], [1.0])
        assert solve(prob).status == UNBOUNDED

    def test_max_iter(self):
        rng = np.random.default_rng(0)
        sol = solve(random_qp(rng, 20, 40), SolverSettings(max_iter=1, polish=False))
        assert sol.status == MAX_ITER
        assert sol.iterations == 1

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            solve(qp(np.eye(1), [0.0], [[1.0]], [2.0], [1.0]))

    @pytest.mark.parametrize("kw", [{"eps_abs": 0}, {"eps_rel": -1}, {"max_iter": 0}])
    def test_bad_settings(self, kw):
        with pytest.raises(ValueError):
            SolverSettings(**kw)


def test_random_qps_match_dual_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        prob = random_qp(rng)
        sol = solve(prob)
        assert_certified(prob, sol)
        oracle_value, oracle_x = dual_oracle(prob)
        assert sol.objective == pytest.approx(oracle_value, abs=1e-5 * (1 + abs(oracle_value)))
        assert objective_value(prob.P, prob.q, sol.x) == pytest.approx(sol.objective, abs=1e-12)


def test_random_semidefinite_qps_certified():
    rng = np.random.default_rng(8)
    for _ in range(25):
        prob = random_qp(rng, pd=False)
        sol = solve(prob)
        if sol.status == OPTIMAL:
            assert_certified(prob, sol)
        else:
            assert sol.status == UNBOUNDED


def test_row_scaling_invariance():
    rng = np.random.default_rng(9)
    for _ in range(10):
        prob = random_qp(rng)
        i = int(rng.integers(prob.A.shape[0]))
        D = np.ones(prob.A.shape[0])
        D[i] = 10.0
        scaled = qp(prob.P.toarray(), prob.q, (sp.diags(D) @ prob.A).toarray(), prob.l * D, prob.u * D)
        a, b = solve(prob), solve(scaled)
        assert b.x == pytest.approx(a.x, abs=1e-6)
        assert b.y[i] == pytest.approx(a.y[i] / 10.0, abs=1e-6)


def test_deterministic():
    prob = random_qp(np.random.default_rng(10), 25, 50)
    a, b = solve(prob), solve(prob)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.history == b.history


def test_objective_trend_on_feasible_start():
    # origin is feasible, so the best objective seen at checkpoints cannot rise
    rng = np.random.default_rng(11)
    n, m = 10, 20
    M = rng.normal(size=(n, n))
    A = rng.normal(size=(m, n))
    prob = qp(M.T @ M + np.eye(n), rng.normal(size=n), A, -np.ones(m), np.ones(m))
    sol = solve(prob)
    objectives = [h[1] for h in sol.history]
    best = np.minimum.accumulate(objectives)
    assert np.all(np.diff(best[::5]) <= 1e-12)
    assert sol.objective <= best[-1] + 1e-8
