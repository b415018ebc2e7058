"""Base learners: projected online gradient descent and online Newton step.

The single-expert functions (``ogd_step``, ``ons_step``) are pure and return
new states.  FLH runs hundreds or thousands of experts per round, so it uses
the array-backed pools at the bottom of this module, which apply exactly the
same update rows-at-a-time.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    Box,
    CurvatureInfo,
    DecisionSet,
    LossSpec,
    NonFiniteError,
    Polytope,
    TvRegretError,
    UnsupportedProjection,
    box_qp,
)

# step-size rules
INVERSE_HALF_T = "inverse_half_t"  # 1 / (2 t), strong convexity 2 (squared losses)
INVERSE_HT = "inverse_ht"  # 1 / (H t)


class SingularCurvature(TvRegretError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class OgdState:
    x: np.ndarray
    t_local: int = 1
    step_rule: str = INVERSE_HALF_T
    H: float = 2.0

    def step_size(self) -> float:
        if self.step_rule == INVERSE_HALF_T:
            return 1.0 / (2.0 * self.t_local)
        if self.step_rule == INVERSE_HT:
            return 1.0 / (self.H * self.t_local)
        raise ValueError(f"unknown step rule {self.step_rule!r}")


def ogd_init(dset: DecisionSet, step_rule=INVERSE_HALF_T, H=2.0) -> OgdState:
    return OgdState(x=np.asarray(dset.center(), dtype=float), t_local=1, step_rule=step_rule, H=H)


def ogd_predict(state: OgdState) -> np.ndarray:
    return state.x.copy()


def ogd_step(state: OgdState, loss: LossSpec, dset: DecisionSet, round_index=None) -> OgdState:
    if state.t_local < 1:
        raise ValueError("t_local must be >= 1")
    g = loss.grad(state.x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient in OGD step", round_index)
    x = dset.project(state.x - state.step_size() * g)
    return replace(state, x=x, t_local=state.t_local + 1)


@dataclass(frozen=True)
class OnsState:
    x: np.ndarray
    A: np.ndarray
    zeta: float
    eps: float
    A_inv: np.ndarray = None

    def __post_init__(self):
        if self.A_inv is None:
            object.__setattr__(self, "A_inv", np.linalg.inv(self.A))


def ons_zeta(curv: CurvatureInfo, d: int) -> float:
    """ONS parameter min{1/(16 G B sqrt d), 1/(4 gamma^2)}."""
    if curv.alpha <= 0:
        raise ValueError("ONS needs an exp-concavity modulus alpha > 0")
    if curv.G <= 0 or curv.B <= 0:
        raise ValueError("ONS needs G > 0 and B > 0")
    gamma = exp_concave_gamma(curv, d)
    return min(1.0 / (16.0 * curv.G * curv.B * np.sqrt(d)), 1.0 / (4.0 * gamma**2))


def exp_concave_gamma(curv: CurvatureInfo, d: int) -> float:
    """Range bound of the rank-one surrogate's inner term over the box."""
    return 2.0 * curv.G * curv.B * np.sqrt(curv.alpha * d / 2.0) + 1.0 / np.sqrt(2.0 * curv.alpha)


def ons_default_eps(zeta: float, dset: DecisionSet) -> float:
    return 1.0 / (zeta**2 * dset.diameter() ** 2)


def ons_init(dset: DecisionSet, zeta: float, eps=None) -> OnsState:
    d = dset.dim
    eps = ons_default_eps(zeta, dset) if eps is None else float(eps)
    return OnsState(
        x=np.asarray(dset.center(), dtype=float),
        A=eps * np.eye(d),
        zeta=zeta,
        eps=eps,
        A_inv=np.eye(d) / eps,
    )


def generalized_projection(dset: DecisionSet, A, y, tol=1e-8, max_iter=2000):
    """argmin over the set of (z - y)^T A (z - y).  Returns (z, residual)."""
    if isinstance(dset, Box):
        if dset.contains(y, tol=0.0):
            return np.asarray(y, dtype=float).copy(), 0.0
        if dset.dim == 1:
            return np.clip(y, -dset.radius, dset.radius), 0.0
        return box_qp(A, y, -dset.radius, dset.radius, tol=tol, max_iter=max_iter)
    if isinstance(dset, Polytope):
        if dset.contains(y, tol=0.0):
            return np.asarray(y, dtype=float).copy(), 0.0
        M = dset._M
        z, res = box_qp(M.T @ A @ M, dset.to_box(y), -1.0, 1.0, tol=tol, max_iter=max_iter)
        return dset.from_box(z), res
    raise UnsupportedProjection(f"generalized projection onto {type(dset).__name__} is not supported")


def ons_step(state: OnsState, loss: LossSpec, dset: DecisionSet, round_index=None) -> OnsState:
    g = loss.grad(state.x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient in ONS step", round_index)
    if not np.any(g):
        return state
    A = state.A + np.outer(g, g)
    if np.linalg.cond(A) > 1e14:
        raise SingularCurvature("ONS curvature matrix is numerically singular")
    Ag = state.A_inv @ g
    A_inv = state.A_inv - np.outer(Ag, Ag) / (1.0 + g @ Ag)
    y = state.x - (A_inv @ g) / state.zeta
    x, res = generalized_projection(dset, A, y)
    if res > 1e-8:
        raise NonFiniteError(f"generalized projection residual {res:.3g} above 1e-8", round_index)
    return replace(state, x=x, A=A, A_inv=A_inv)


# ---------------------------------------------------------------------------
# pools


class OgdPool:
    """Array-backed population of independent OGD experts."""

    def __init__(self, dset: DecisionSet, step_rule=INVERSE_HALF_T, H=2.0):
        self.dset = dset
        self.step_rule = step_rule
        self.H = H
        self.X = np.empty((0, dset.dim))
        self.T = np.empty(0, dtype=np.int64)

    def __len__(self):
        return len(self.T)

    def add(self):
        self.X = np.vstack([self.X, np.asarray(self.dset.center(), dtype=float)[None, :]])
        self.T = np.append(self.T, 1)

    def keep(self, mask):
        self.X = self.X[mask]
        self.T = self.T[mask]

    def predictions(self):
        return self.X

    def step(self, loss: LossSpec, round_index=None):
        G = loss.grad(self.X)
        if not np.all(np.isfinite(G)):
            raise NonFiniteError("non-finite gradient in OGD pool step", round_index)
        if self.step_rule == INVERSE_HALF_T:
            eta = 1.0 / (2.0 * self.T)
        else:
            eta = 1.0 / (self.H * self.T)
        self.X = self.dset.project_rows(self.X - eta[:, None] * G)
        self.T = self.T + 1

    def state(self, i) -> OgdState:
        return OgdState(x=self.X[i].copy(), t_local=int(self.T[i]), step_rule=self.step_rule, H=self.H)


class OnsPool:
    """Array-backed population of independent ONS experts."""

    def __init__(self, dset: DecisionSet, zeta: float, eps=None):
        self.dset = dset
        self.zeta = zeta
        self.eps = ons_default_eps(zeta, dset) if eps is None else float(eps)
        d = dset.dim
        self.X = np.empty((0, d))
        self.A = np.empty((0, d, d))
        self.A_inv = np.empty((0, d, d))

    def __len__(self):
        return len(self.X)

    def add(self):
        d = self.dset.dim
        self.X = np.vstack([self.X, np.asarray(self.dset.center(), dtype=float)[None, :]])
        self.A = np.concatenate([self.A, (self.eps * np.eye(d))[None]])
        self.A_inv = np.concatenate([self.A_inv, (np.eye(d) / self.eps)[None]])

    def keep(self, mask):
        self.X = self.X[mask]
        self.A = self.A[mask]
        self.A_inv = self.A_inv[mask]

    def predictions(self):
        return self.X

    def step(self, loss: LossSpec, round_index=None):
        G = loss.grad(self.X)
        if not np.all(np.isfinite(G)):
            raise NonFiniteError("non-finite gradient in ONS pool step", round_index)
        self.A = self.A + G[:, :, None] * G[:, None, :]
        AG = np.einsum("kij,kj->ki", self.A_inv, G)
        denom = 1.0 + np.einsum("ki,ki->k", G, AG)
        self.A_inv = self.A_inv - AG[:, :, None] * AG[:, None, :] / denom[:, None, None]
        Y = self.X - np.einsum("kij,kj->ki", self.A_inv, G) / self.zeta
        outside = np.array([self.dset.residual(y) > 0 for y in Y], dtype=bool)
        for i in np.nonzero(outside)[0]:
            if np.linalg.cond(self.A[i]) > 1e14:
                raise SingularCurvature("ONS curvature matrix is numerically singular")
            Y[i], res = generalized_projection(self.dset, self.A[i], Y[i])
            if res > 1e-8:
                raise NonFiniteError(f"generalized projection residual {res:.3g} above 1e-8", round_index)
        self.X = Y

    def state(self, i) -> OnsState:
        return OnsState(x=self.X[i].copy(), A=self.A[i].copy(), zeta=self.zeta, eps=self.eps,
                        A_inv=self.A_inv[i].copy())
