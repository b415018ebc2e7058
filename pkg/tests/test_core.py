import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvregret.core import (
    Box,
    CurvatureInfo,
    DimensionError,
    GeneralSmooth,
    L1Ball,
    L2Ball,
    LabelBoundError,
    Polytope,
    QuadraticSurrogate,
    Simplex,
    SquaredScalar,
    UnsupportedProjection,
    box_qp,
    eval_grad,
    eval_loss,
    finite_difference_grad,
    project,
    regret_trace,
    total_variation,
)
from tvregret.reductions import ec_surrogate


def test_eval_loss_squared():
    assert eval_loss(SquaredScalar(0.0), [0.0]) == 0.0
    assert eval_loss(SquaredScalar(3.0), [1.0]) == 4.0


def test_eval_loss_ec_surrogate_at_anchor():
    alpha = 0.7
    f = ec_surrogate(np.array([0.2, -0.4]), np.array([1.5, 2.0]), alpha)
    assert eval_loss(f, [0.2, -0.4]) == pytest.approx(1.0 / (2 * alpha), rel=1e-14)


def test_eval_grad_examples():
    assert eval_grad(SquaredScalar(2.0), [2.0])[0] == 0.0
    assert eval_grad(SquaredScalar(0.0), [1.0])[0] == 2.0
    c = np.array([0.5, -1.0, 2.0])
    x = np.array([1.0, 1.0, 1.0])
    q = QuadraticSurrogate(c)
    np.testing.assert_allclose(eval_grad(q, x), 2 * (x - c))
    np.testing.assert_allclose(eval_grad(q, x), finite_difference_grad(q.value, x), rtol=1e-7)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_loss(QuadraticSurrogate(np.zeros(2)), [0.0, 0.0, 0.0])
    with pytest.raises(DimensionError):
        eval_grad(SquaredScalar(1.0), [0.0, 1.0])


def test_label_bound_rejected():
    curv = CurvatureInfo(G=4.0, B=2.0)
    SquaredScalar(4.0, curv)
    with pytest.raises(LabelBoundError):
        SquaredScalar(4.5, curv)


def test_curvature_invariants():
    with pytest.raises(ValueError):
        CurvatureInfo(H=-1.0)
    with pytest.raises(ValueError):
        CurvatureInfo(G=np.inf)
    CurvatureInfo(G=4.0, B=2.0).check_squared_game()
    with pytest.raises(ValueError):
        CurvatureInfo(G=1.0, B=2.0).check_squared_game()
    with pytest.raises(ValueError):
        CurvatureInfo(alpha=1.0, G=0.5, G_inf=1.0, B=1.0).check_exp_concave()


def _losses(rng, d):
    c = rng.uniform(-2, 2, d)
    a = rng.normal(size=d)
    y = rng.uniform(-1, 1)
    return [
        QuadraticSurrogate(c, rng.uniform(0.1, 3.0)),
        GeneralSmooth(lambda x: np.log1p(np.exp(x @ a)), lambda x: (1 / (1 + np.exp(-(x @ a))))[..., None] * a, d),
        GeneralSmooth(lambda x: (x @ a - y) ** 2, lambda x: 2 * (x @ a - y)[..., None] * a, d),
    ]


def test_gradient_value_consistency():
    rng = np.random.default_rng(0)
    for d in (1, 3):
        for _ in range(200 // 2):
            for f in _losses(rng, d):
                x = rng.uniform(-2, 2, d)
                g = f.grad(x)
                fd = finite_difference_grad(f.value, x)
                assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))
    y = 1.3
    f = SquaredScalar(y)
    for x in rng.uniform(-3, 3, 200):
        assert abs(f.grad([x])[0] - finite_difference_grad(f.value, np.array([x]))[0]) <= 1e-5 * max(1, abs(x - y))


def test_batched_evaluation_matches_pointwise():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (5, 3))
    for f in _losses(rng, 3):
        np.testing.assert_allclose(f.value(X), [f.value(x) for x in X])
        np.testing.assert_allclose(f.grad(X), np.stack([f.grad(x) for x in X]))


# ---------------------------------------------------------------------------
# projections


def test_box_projection_examples():
    B = Box(2.0, 2)
    np.testing.assert_array_equal(project(B, [3.0, -5.0]), [2.0, -2.0])
    np.testing.assert_array_equal(project(B, [1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_array_equal(project(B, [3.0, -5.0], "l1"), project(B, [3.0, -5.0], "l2"))


def test_l1_ball_l2_projection_example():
    W = L1Ball(1.0, 2)
    np.testing.assert_allclose(project(W, [0.8, 0.8]), [0.5, 0.5], atol=1e-12)
    # brute-force grid at step 1e-4 along the active face
    t = np.arange(0, 1 + 1e-9, 1e-4)
    cand = np.stack([t, 1 - t], axis=1)
    best = cand[np.argmin(np.sum((cand - 0.8) ** 2, axis=1))]
    np.testing.assert_allclose(project(W, [0.8, 0.8]), best, atol=1e-4)


def test_l1_distance_projections_against_grid():
    rng = np.random.default_rng(2)
    g = np.linspace(-1, 1, 801)
    G1, G2 = np.meshgrid(g, g)
    pts = np.stack([G1.ravel(), G2.ravel()], axis=1)
    for W in (L1Ball(1.0, 2), L2Ball(1.0, 2)):
        inside = pts[np.array([W.contains(p, 1e-12) for p in pts])]
        for _ in range(5):
            x = rng.uniform(-3, 3, 2)
            p = W.project(x, "l1")
            best = np.min(np.sum(np.abs(inside - x), axis=1))
            assert W.contains(p, 1e-9)
            assert np.sum(np.abs(p - x)) <= best + 1e-9


def test_unsupported_projection():
    with pytest.raises(UnsupportedProjection):
        Simplex(3).project(np.ones(3), "l1")
    with pytest.raises(UnsupportedProjection):
        Box(1.0, 2).project(np.ones(2), "linf")


def _sets():
    A = np.array([[1.0, 0.5, 0.0], [0.0, 1.0, -0.3], [0.2, 0.0, 1.0]])
    return [
        Box(1.5, 3),
        L2Ball(1.0, 3),
        L1Ball(1.0, 3),
        Simplex(3),
        Polytope(A, np.array([1.0, 2.0, 1.0]), np.array([-1.0, 0.0, -2.0])),
    ]


@pytest.mark.parametrize("dset", _sets(), ids=lambda s: type(s).__name__)
def test_projection_membership_idempotence_nonexpansive(dset):
    rng = np.random.default_rng(3)
    X = rng.normal(scale=3.0, size=(1000, 3))
    Y = rng.normal(scale=3.0, size=(1000, 3))
    for x, y in zip(X, Y):
        px, py = dset.project(x), dset.project(y)
        assert dset.residual(px) <= 1e-9
        np.testing.assert_allclose(dset.project(px), px, atol=1e-12)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-9


def test_polytope_l1_projection_feasible_and_not_worse_than_l2():
    rng = np.random.default_rng(4)
    P = _sets()[-1]
    for x in rng.normal(scale=3.0, size=(20, 3)):
        p1 = P.project(x, "l1")
        p2 = P.project(x, "l2")
        assert P.residual(p1) <= 1e-9
        assert np.sum(np.abs(p1 - x)) <= np.sum(np.abs(p2 - x)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.1, 3.0))
def test_box_qp_matches_clip_for_diagonal(v, r):
    Q = np.diag([1.0, 3.0])
    z, res = box_qp(Q, np.array(v), -r, r)
    np.testing.assert_allclose(z, np.clip(v, -r, r), atol=1e-9)
    assert res <= 1e-9


# ---------------------------------------------------------------------------
# regret accounting


def test_total_variation():
    assert total_variation([1.0]) == 0.0
    assert total_variation([0.0, 1.0, -1.0]) == 3.0
    assert total_variation(np.array([[0, 0], [1, -1]])) == 2.0


def test_regret_trace_reproducible():
    rng = np.random.default_rng(5)
    a, b = rng.uniform(0, 2, 500), rng.uniform(0, 2, 500)
    w = np.cumsum(rng.normal(size=500))
    tr = regret_trace(a, b, w)
    np.testing.assert_allclose(tr.cumulative_regret, np.cumsum(a - b), rtol=1e-9)
    assert np.all(np.diff(tr.comparator_tv) >= 0)
    assert tr.regret == pytest.approx(np.sum(a - b))
    assert tr.interval_regret(10, 20) == pytest.approx(np.sum((a - b)[9:20]))
