"""Surrogate-loss reductions.

* strongly convex losses on a box -> d independent scalar squared-loss games;
* exp-concave losses -> rank-one quadratic surrogates played by FLH-ONS;
* any convex set -> its circumscribing box via a distance-penalised surrogate;
* square polytopes -> the unit box by an affine change of variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    AuditError,
    Box,
    CurvatureInfo,
    DecisionSet,
    GeneralSmooth,
    LossSpec,
    NonFiniteError,
    Polytope,
    QuadraticSurrogate,
)
from .experts import INVERSE_HALF_T, exp_concave_gamma, ons_zeta
from .meta import FLH, GAME_EXP_CONCAVE, GAME_STRONGLY_CONVEX, PRUNE_LOG, flh_meta_rate

AUDIT_SLACK = 1e-9
BOX_AUDIT_SLACK = 1e-8


# ---------------------------------------------------------------------------
# strongly convex -> per-coordinate squared games


def sc_surrogate(x_t, grad, H: float, i: int) -> QuadraticSurrogate:
    """(x - (x_t[i] - grad[i] / H))^2 as a 1-D loss."""
    if H <= 0:
        raise ValueError("strong convexity H must be > 0")
    x_t = np.asarray(x_t, dtype=float)
    grad = np.asarray(grad, dtype=float)
    return QuadraticSurrogate(np.array([x_t[i] - grad[i] / H]), 1.0)


def sc_bridge_gap(f: LossSpec, x_t, w, H: float, grad=None) -> float:
    """(H/2) sum_i [l_i(x_t[i]) - l_i(w[i])] - (f(x_t) - f(w)); >= 0 when the bridge holds."""
    x_t = np.asarray(x_t, dtype=float)
    w = np.asarray(w, dtype=float)
    g = f.grad(x_t) if grad is None else np.asarray(grad, dtype=float)
    c = x_t - g / H
    surrogate = 0.5 * H * float(np.sum((x_t - c) ** 2 - (w - c) ** 2))
    return surrogate - (f.value(x_t) - f.value(w))


def sc_regret_bridge_check(f: LossSpec, x_t, w, H: float, slack=AUDIT_SLACK) -> bool:
    gap = sc_bridge_gap(f, x_t, w, H)
    scale = max(1.0, abs(f.value(x_t)), abs(f.value(w)))
    return gap >= -slack * scale


class ScReduction:
    """d scalar FLH-OGD runners on [-B, B] fed with per-coordinate surrogates."""

    def __init__(self, d: int, B: float, H: float, G_inf: float, pruning=PRUNE_LOG):
        if H <= 0:
            raise ValueError("strong convexity H must be > 0")
        self.d, self.B, self.H, self.G_inf = d, float(B), float(H), float(G_inf)
        curv = CurvatureInfo(H=H, G=G_inf, G_inf=G_inf, B=B)
        self.zeta_meta = flh_meta_rate(curv, GAME_STRONGLY_CONVEX)
        self.runners = [FLH(Box(B, 1), self.zeta_meta, base="ogd", pruning=pruning, step_rule=INVERSE_HALF_T)
                        for _ in range(d)]
        self._x = None
        self.bridge_failures = 0

    def predict(self) -> np.ndarray:
        self._x = np.array([r.predict()[0] for r in self.runners])
        return self._x.copy()

    def update(self, f: LossSpec, comparator=None, round_index=None):
        x = self._x if self._x is not None else self.predict()
        g = f.grad(x)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient in the strongly convex reduction", round_index)
        if comparator is not None and not sc_regret_bridge_check(f, x, comparator, self.H):
            self.bridge_failures += 1
            raise AuditError("per-coordinate bridge inequality failed", round_index)
        for i, r in enumerate(self.runners):
            r.update(sc_surrogate(x, g, self.H, i))
        self._x = None
        return g

    @property
    def pool_sizes(self):
        return [r.size for r in self.runners]


# ---------------------------------------------------------------------------
# exp-concave -> rank-one quadratic surrogate


def ec_surrogate(x_t, grad, alpha: float) -> GeneralSmooth:
    """(sqrt(alpha/2) grad^T (x - x_t) + 1/sqrt(2 alpha))^2."""
    if alpha <= 0:
        raise ValueError("exp-concavity alpha must be > 0")
    x_t = np.asarray(x_t, dtype=float).copy()
    g = np.asarray(grad, dtype=float).copy()
    a = np.sqrt(alpha / 2.0)
    off = 1.0 / np.sqrt(2.0 * alpha)

    def inner(x):
        return a * ((np.asarray(x) - x_t) @ g) + off

    return GeneralSmooth(
        value_fn=lambda x: inner(x) ** 2,
        grad_fn=lambda x: 2.0 * a * np.asarray(inner(x))[..., None] * g,
        d=x_t.size,
        lipschitz_grad=alpha * float(g @ g),
    )


def ec_domination_gap(loss: LossSpec, surrogate: LossSpec, x_t, w) -> float:
    """[f(x_t) - f(w)] - [l(x_t) - l(w)]; >= 0 when the surrogate dominates."""
    return (surrogate.value(x_t) - surrogate.value(w)) - (loss.value(x_t) - loss.value(w))


def squared_linear_alpha(radius: float) -> float:
    """Exp-concavity of (a^T x - y)^2 when |a^T x - y| <= radius on the domain."""
    return 1.0 / (2.0 * radius**2)


class ExpConcaveFLH:
    """FLH-ONS run on the rank-one surrogates of exp-concave losses."""

    def __init__(self, dset: DecisionSet, curv: CurvatureInfo, pruning=PRUNE_LOG, eps=None):
        if curv.alpha <= 0:
            raise ValueError("exp-concave reduction needs alpha > 0")
        d = dset.dim
        self.dset, self.curv = dset, curv
        self.gamma = exp_concave_gamma(curv, d)
        self.zeta_meta = flh_meta_rate(curv, GAME_EXP_CONCAVE, d)
        self.zeta = ons_zeta(curv, d)
        self.flh = FLH(dset, self.zeta_meta, base="ons", pruning=pruning, zeta=self.zeta, eps=eps)
        self._x = None

    def predict(self):
        self._x = self.flh.predict()
        return self._x.copy()

    def update(self, loss: LossSpec, comparators=None, round_index=None, slack=AUDIT_SLACK):
        x = self._x if self._x is not None else self.predict()
        g = loss.grad(x)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient in the exp-concave reduction", round_index)
        f = ec_surrogate(x, g, self.curv.alpha)
        if comparators is not None:
            for w in np.atleast_2d(comparators):
                if ec_domination_gap(loss, f, x, w) < -slack * max(1.0, abs(loss.value(x))):
                    raise AuditError("exp-concave surrogate failed to dominate", round_index)
        self.flh.update(f)
        self._x = None
        return f


# ---------------------------------------------------------------------------
# general convex set -> box


def _l1_distance_terms(W: DecisionSet, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x - W.project(x, "l1")
    return x - W.project_rows(x, "l1")


def cutkosky_surrogate(f: LossSpec, W: DecisionSet, G: float) -> GeneralSmooth:
    """f(x) + G ||x - Pi_W(x)||_1 with the sign-vector subgradient."""

    def value(x):
        r = _l1_distance_terms(W, x)
        return f.value(x) + G * np.sum(np.abs(r), axis=-1)

    def grad(x):
        r = _l1_distance_terms(W, x)
        return f.grad(x) + G * np.sign(r)

    return GeneralSmooth(value_fn=value, grad_fn=grad, d=W.dim, curvature=getattr(f, "curvature", None))


@dataclass
class BoxToConvex:
    W: DecisionSet
    G: float
    inner: object
    D: Box = field(init=False)
    audit_failures: int = 0

    def __post_init__(self):
        self.D = Box(self.W.linf_radius(), self.W.dim)


def box_to_convex(W: DecisionSet, G: float, H: float, pruning=PRUNE_LOG) -> BoxToConvex:
    """The reduction with the per-coordinate strongly convex learner inside."""
    inner = ScReduction(W.dim, W.linf_radius(), H, G_inf=2.0 * G, pruning=pruning)
    return BoxToConvex(W, G, inner)


def box_to_convex_round(red: BoxToConvex, f: LossSpec, round_index=None, slack=BOX_AUDIT_SLACK):
    """One round: play the L1 projection of the inner iterate, send the surrogate.

    Returns (played point, surrogate loss).
    """
    x = red.inner.predict()
    played = red.W.project(x, "l1")
    if not red.W.contains(played, tol=1e-8):
        raise AuditError("played point left the decision set", round_index)
    surrogate = cutkosky_surrogate(f, red.W, red.G)
    lhs, rhs = f.value(played), surrogate.value(x)
    if lhs > rhs + slack * max(1.0, abs(rhs)):
        red.audit_failures += 1
        raise AuditError(f"f(played)={lhs:.6g} exceeds surrogate {rhs:.6g}; check the Lipschitz constant",
                         round_index)
    red.inner.update(surrogate, round_index=round_index)
    return played, surrogate


# ---------------------------------------------------------------------------
# polytope -> unit box


class PolytopeReparam:
    """x = A^-1 (D^-1 (z + 1) + c) maps the unit box onto {c <= A x <= b}."""

    def __init__(self, A, b, c):
        self.polytope = Polytope(A, b, c)
        self.A, self.b, self.c = self.polytope.A, self.polytope.b, self.polytope.c
        self.D = np.diag(2.0 / (self.b - self.c))
        self.M = self.polytope._M  # A^-1 D^-1

    @property
    def dim(self):
        return self.A.shape[1]

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        return (z + 1.0) @ self.M.T + np.linalg.solve(self.A, self.c)

    def backward(self, x):
        x = np.asarray(x, dtype=float)
        return (x @ self.A.T - self.c) @ self.D.T - 1.0

    def lipschitz_scale(self) -> float:
        return float(np.linalg.norm(self.M, 2))

    def wrap_loss(self, f: LossSpec) -> GeneralSmooth:
        """f~(z) = f(forward(z)); gradient M^T grad f."""
        M = self.M
        L = f.smoothness()
        return GeneralSmooth(
            value_fn=lambda z: f.value(self.forward(z)),
            grad_fn=lambda z: f.grad(self.forward(z)) @ M,
            d=self.dim,
            lipschitz_grad=None if L is None else L * self.lipschitz_scale() ** 2,
        )


def polytope_to_box(A, b, c) -> PolytopeReparam:
    return PolytopeReparam(A, b, c)
