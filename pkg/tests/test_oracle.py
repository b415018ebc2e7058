import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import GRID_STEP, cvxpy_tv_program, grid_dp_1d
from tvregret.adversary import gen_example1, squared_linear_loss
from tvregret.core import ConvergenceError, DimensionError, QuadraticSurrogate, total_variation
from tvregret.oracle.io import problem_from_dict, problem_to_dict, solution_from_dict, solution_to_dict
from tvregret.oracle.solve import (
    OracleProblem,
    OracleSolution,
    kkt_check,
    solve_1d_squared,
    solve_multi,
    squared_problem,
    trace_is_monotone,
)
from tvregret.oracle.tv import tv_box_prox, tv_prox


def test_tv_prox_against_cvxpy():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        y = rng.normal(size=n) * 2
        lam = float(rng.uniform(0, 3))
        x = cp.Variable(n)
        cp.Problem(cp.Minimize(0.5 * cp.sum_squares(x - y) + lam * cp.norm1(cp.diff(x)))).solve()
        ours = tv_prox(y, lam)
        val = lambda z: 0.5 * np.sum((z - y) ** 2) + lam * np.sum(np.abs(np.diff(z)))
        assert val(ours) <= val(x.value) + 1e-7


def test_tv_box_prox_certificate():
    rng = np.random.default_rng(1)
    y = rng.uniform(-5, 5, 300)
    u, x, v = tv_box_prox(y, 2.0, 1.5)
    assert np.max(np.abs(v)) <= 2.0 + 1e-9
    assert abs(v[-1]) <= 1e-9
    np.testing.assert_allclose(u - y, np.diff(np.concatenate([[0.0], v])) + (u - x), atol=1e-9)


def test_constant_labels_interior():
    sol = solve_1d_squared(squared_problem(np.full(10, 1.5), 0.3, 2.0))
    np.testing.assert_allclose(sol.u[:, 0], 1.5)
    assert sol.lam == 0.0


def test_zero_budget_clips_mean():
    sol = solve_1d_squared(squared_problem([0.0, 4.0], 0.0, 2.0))
    np.testing.assert_allclose(sol.u[:, 0], [2.0, 2.0])
    assert kkt_check(squared_problem([0.0, 4.0], 0.0, 2.0), sol, 1e-9).passed


def test_example1_lambda_recovered():
    ex = gen_example1(4096)
    sol = solve_1d_squared(ex.problem())
    assert abs(sol.lam - 510) <= 0.01 * 510
    np.testing.assert_allclose(sol.u[:, 0], ex.u, atol=1e-9)


def test_single_round():
    sol = solve_1d_squared(squared_problem([3.0], 1.0, 2.0))
    assert sol.u[0, 0] == 2.0 and sol.s.shape == (0, 1)
    assert kkt_check(squared_problem([3.0], 1.0, 2.0), sol).passed


def test_problem_validation():
    with pytest.raises(ValueError):
        squared_problem([1.0], -1.0, 1.0)
    with pytest.raises(ValueError):
        squared_problem([1.0], 1.0, 0.0)
    with pytest.raises(DimensionError):
        OracleProblem([QuadraticSurrogate(np.zeros(1)), QuadraticSurrogate(np.zeros(2))], 1.0, 1.0)


def test_brute_force_equivalence_small_n():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n = int(rng.integers(1, 9))
        B = float(rng.choice([1.0, 2.0]))
        G = 2 * B
        C = float(rng.uniform(0, 2.5))
        y = rng.uniform(-G, G, n)
        p = squared_problem(y, C, B, G=G)
        sol = solve_1d_squared(p)
        grid = grid_dp_1d(y, C, B)
        # the grid is a restriction of the feasible set
        assert sol.objective <= grid + 1e-12
        assert sol.objective >= grid - 2 * n * GRID_STEP * (G + B)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-6, 6), min_size=2, max_size=200),
    st.floats(0.0, 10.0),
    st.sampled_from([1.0, 2.0]),
)
def test_kkt_pipeline_property(y, C, B):
    p = squared_problem(y, C, B)
    sol = solve_1d_squared(p)
    rep = kkt_check(p, sol, 1e-6)
    assert rep.passed, rep.as_dict()
    assert total_variation(sol.u) <= C + 1e-7
    assert np.max(np.abs(sol.u)) <= B + 1e-9
    assert trace_is_monotone(sol.trace)


def test_kkt_detects_corrupted_lambda():
    rng = np.random.default_rng(3)
    p = squared_problem(rng.uniform(-4, 4, 200), 3.0, 2.0)
    sol = solve_1d_squared(p)
    assert sol.lam > 0
    bad = OracleSolution(sol.u, sol.lam + 1.0, sol.s, sol.gamma_plus, sol.gamma_minus)
    rep = kkt_check(p, bad, 1e-6)
    assert not rep.passed
    # some |s_t - s_{t-1}| is at least of order 1/n, so the residual is too
    assert rep.stationarity >= np.max(np.abs(np.diff(np.concatenate([[0], sol.s[:, 0], [0]])))) * 0.99


def test_kkt_interior_certificate():
    y = np.array([0.1, 0.3, 0.2])
    p = squared_problem(y, 1.0, 2.0)
    sol = OracleSolution(y[:, None], 0.0, np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((3, 1)))
    assert kkt_check(p, sol, 1e-12).passed


def test_kkt_dimension_mismatch():
    p = squared_problem([0.0, 1.0], 1.0, 1.0)
    sol = OracleSolution(np.zeros((3, 1)), 0.0, np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(DimensionError):
        kkt_check(p, sol)


def test_kkt_residuals_large_n():
    rng = np.random.default_rng(4)
    for n in (1000, 5000):
        y = np.clip(np.cumsum(rng.normal(0, 0.1, n)) + rng.uniform(-1, 1, n), -4, 4)
        p = squared_problem(y, 5.0, 2.0, G=4.0)
        assert kkt_check(p, solve_1d_squared(p), 1e-6).passed


# ---------------------------------------------------------------------------
# multi-dimensional solver


def test_multi_interior_optimum():
    rng = np.random.default_rng(5)
    c = rng.uniform(-1, 1, 2)
    losses = [QuadraticSurrogate(c, 1.0) for _ in range(20)]
    sol = solve_multi(OracleProblem(losses, 10.0, 2.0))
    np.testing.assert_allclose(sol.u, np.tile(c, (20, 1)), atol=1e-9)
    assert sol.lam == 0.0


def test_multi_agrees_with_1d():
    rng = np.random.default_rng(6)
    for _ in range(5):
        y = rng.uniform(-4, 4, 150)
        p = squared_problem(y, 2.0, 2.0)
        a, b = solve_1d_squared(p), solve_multi(p)
        assert abs(a.objective - b.objective) <= 1e-6 * max(1.0, a.objective)


def test_multi_matches_exhaustive_reference():
    pytest.importorskip("cvxpy")
    rng = np.random.default_rng(7)
    for _ in range(5):
        c = rng.uniform(-3, 3, (6, 2))
        w = rng.uniform(0.5, 2.0, 6)
        p = OracleProblem([QuadraticSurrogate(ci, wi) for ci, wi in zip(c, w)], 0.5, 2.0)
        sol = solve_multi(p)
        ref, _ = cvxpy_tv_program(c, w, 0.5, 2.0)
        assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_multi_general_losses_and_polish():
    rng = np.random.default_rng(8)
    losses = [squared_linear_loss(rng.normal(size=3), rng.uniform(-1, 1)) for _ in range(30)]
    p = OracleProblem(losses, 1.0, 1.0)
    sol = solve_multi(p)
    assert kkt_check(p, sol, 1e-5).passed
    polished = solve_multi(p, tol=1e-10)
    assert abs(sol.objective - polished.objective) <= 1e-6 * max(1.0, abs(polished.objective))


def test_multi_zero_budget():
    c = np.array([[0.0, 1.0], [4.0, -1.0], [1.0, 0.0]])
    p = OracleProblem([QuadraticSurrogate(ci) for ci in c], 0.0, 2.0)
    sol = solve_multi(p)
    np.testing.assert_allclose(sol.u, np.tile(np.clip(c.mean(axis=0), -2, 2), (3, 1)), atol=1e-8)


def test_multi_nonconvergence_reports_residuals():
    rng = np.random.default_rng(9)
    losses = [squared_linear_loss(rng.normal(size=2), rng.uniform(-1, 1)) for _ in range(20)]
    with pytest.raises(ConvergenceError) as exc:
        solve_multi(OracleProblem(losses, 0.5, 1.0), max_iter=2, tol=1e-14)
    assert "gradient_mapping" in exc.value.residuals


# ---------------------------------------------------------------------------
# serialisation


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    p = squared_problem(rng.uniform(-4, 4, 50), 2.0, 2.0, G=4.0)
    sol = solve_1d_squared(p)
    p2 = problem_from_dict(problem_to_dict(p))
    s2 = solution_from_dict(solution_to_dict(sol))
    np.testing.assert_array_equal(p2.labels, p.labels)
    np.testing.assert_array_equal(s2.u, sol.u)
    assert s2.lam == sol.lam
    assert kkt_check(p2, s2).passed
    q = OracleProblem([QuadraticSurrogate(rng.normal(size=2), 0.5) for _ in range(5)], 1.0, 1.0)
    q2 = problem_from_dict(problem_to_dict(q))
    assert q2.objective(np.zeros((5, 2))) == q.objective(np.zeros((5, 2)))


def test_reference_grid_dp_matches_enumeration():
    import itertools

    rng = np.random.default_rng(11)
    vals = np.linspace(-1, 1, 5)
    for _ in range(30):
        n = int(rng.integers(1, 6))
        y = rng.uniform(-2, 2, n)
        C = float(rng.choice([0.0, 0.5, 1.0, 1.5, 3.0]))
        best = min(
            0.5 * np.sum((y - np.array(u)) ** 2)
            for u in itertools.product(vals, repeat=n)
            if np.sum(np.abs(np.diff(u))) <= C + 1e-9
        )
        assert grid_dp_1d(y, C, 1.0, step=0.5) == pytest.approx(best, abs=1e-12)
