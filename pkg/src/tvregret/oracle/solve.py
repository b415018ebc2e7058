"""Offline TV-budgeted comparator: solvers and KKT certificates.

The program is

    minimise   scale * sum_t f_t(u_t)
    subject to sum_t ||u_{t+1} - u_t||_1 <= C_n,   ||u_t||_inf <= B,

and a certificate is (lam, s, gamma_plus, gamma_minus) with

    scale * grad f_t(u_t) = lam (s_t - s_{t-1}) + gamma_minus_t - gamma_plus_t,

s_0 = s_n = 0.  ``scale = 0.5`` with squared losses gives the half-weighted
squared-loss program; its ``lam`` is the one the lambda-length bound refers to.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import (
    ConvergenceError,
    CurvatureInfo,
    DimensionError,
    LossSpec,
    QuadraticSurrogate,
    SquaredScalar,
    total_variation,
)
from .tv import tv_box_prox

SIGN_TOL = 1e-8


@dataclass
class OracleProblem:
    losses: Sequence[LossSpec]
    C_n: float
    B: float
    loss_scale: float = 1.0
    # label bound (squared losses) or gradient sup-norm bound, used by audits
    G: Optional[float] = None

    def __post_init__(self):
        if self.C_n < 0:
            raise ValueError("TV budget C_n must be >= 0")
        if self.B <= 0:
            raise ValueError("box radius B must be > 0")
        if len(self.losses) < 1:
            raise ValueError("need at least one round")
        dims = {loss.dim for loss in self.losses}
        if len(dims) != 1:
            raise DimensionError(f"losses disagree on dimension: {sorted(dims)}")
        self._labels = None

    @property
    def n(self) -> int:
        return len(self.losses)

    @property
    def d(self) -> int:
        return self.losses[0].dim

    @property
    def labels(self) -> np.ndarray:
        if self._labels is None:
            if not all(isinstance(f, SquaredScalar) for f in self.losses):
                raise TypeError("labels are only defined for squared scalar losses")
            self._labels = np.array([f.y for f in self.losses], dtype=float)
        return self._labels

    @property
    def is_squared(self) -> bool:
        return all(isinstance(f, SquaredScalar) for f in self.losses)

    def objective(self, u) -> float:
        return self.loss_scale * float(np.sum(_Stack(self).values(np.asarray(u, dtype=float).reshape(self.n, self.d))))


def squared_problem(labels, C_n, B, G=None, loss_scale=0.5) -> OracleProblem:
    """The half-weighted squared-loss program over labels y_1..y_n."""
    labels = np.asarray(labels, dtype=float)
    curv = None if G is None else CurvatureInfo(G=G, G_inf=G, B=B)
    prob = OracleProblem([SquaredScalar(float(y), curv) for y in labels], C_n, B, loss_scale, G)
    prob._labels = labels.copy()
    return prob


class _Stack:
    """Vectorised values / gradients of a loss sequence at U of shape (n, d)."""

    def __init__(self, problem: OracleProblem):
        losses = problem.losses
        self.n, self.d = problem.n, problem.d
        if problem.is_squared:
            self.kind = "quadratic"
            self.centers = problem.labels[:, None]
            self.weights = np.ones(self.n)
        elif all(isinstance(f, QuadraticSurrogate) for f in losses):
            self.kind = "quadratic"
            self.centers = np.stack([f.center for f in losses])
            self.weights = np.array([f.weight for f in losses], dtype=float)
        else:
            self.kind = "general"
            self.losses = list(losses)

    def values(self, U):
        if self.kind == "quadratic":
            return self.weights * np.sum((U - self.centers) ** 2, axis=1)
        return np.array([f.value(u) for f, u in zip(self.losses, U)])

    def grads(self, U):
        if self.kind == "quadratic":
            return 2.0 * self.weights[:, None] * (U - self.centers)
        return np.stack([f.grad(u) for f, u in zip(self.losses, U)])

    def smoothness(self):
        if self.kind == "quadratic":
            return float(2.0 * np.max(self.weights))
        Ls = [f.smoothness() for f in self.losses]
        if all(L is not None for L in Ls):
            return float(max(Ls))
        Gs = [f.curvature.G for f in self.losses if f.curvature is not None]
        if len(Gs) == len(self.losses):
            return float(max(Gs)) ** 2
        raise ValueError("cannot infer a gradient Lipschitz constant; pass L explicitly")


@dataclass
class OracleSolution:
    u: np.ndarray
    lam: float
    s: np.ndarray
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    kkt_residuals: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    objective: float = float("nan")

    @property
    def n(self):
        return self.u.shape[0]

    @property
    def d(self):
        return self.u.shape[1]

    def tv(self) -> float:
        return total_variation(self.u)


@dataclass
class KktReport:
    stationarity: float
    tv_slackness: float
    box_slackness: float
    dual_feasibility: float
    subgradient_box: float
    sign_consistency: float
    primal_tv: float
    primal_box: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity,
            self.tv_slackness,
            self.box_slackness,
            self.dual_feasibility,
            self.subgradient_box,
            self.sign_consistency,
            self.primal_tv,
            self.primal_box,
        )

    def as_dict(self):
        return {
            "stationarity": self.stationarity,
            "tv_slackness": self.tv_slackness,
            "box_slackness": self.box_slackness,
            "dual_feasibility": self.dual_feasibility,
            "subgradient_box": self.subgradient_box,
            "sign_consistency": self.sign_consistency,
            "primal_tv": self.primal_tv,
            "primal_box": self.primal_box,
            "passed": self.passed,
        }


def stationarity_residual(problem: OracleProblem, sol: OracleSolution) -> np.ndarray:
    """Per-round, per-coordinate residual of the stationarity equation."""
    grads = problem.loss_scale * _Stack(problem).grads(sol.u)
    d = sol.u.shape[1]
    s_ext = np.vstack([np.zeros((1, d)), sol.s, np.zeros((1, d))])
    return grads - sol.lam * np.diff(s_ext, axis=0) - sol.gamma_minus + sol.gamma_plus


def kkt_check(problem: OracleProblem, sol: OracleSolution, tol=1e-6) -> KktReport:
    n, d = problem.n, problem.d
    if sol.u.shape != (n, d) or sol.s.shape != (n - 1, d):
        raise DimensionError("solution dimensions do not match the problem")
    B, u = problem.B, sol.u
    stat = float(np.max(np.abs(stationarity_residual(problem, sol))))
    tv = total_variation(u)
    tv_slack = abs(sol.lam * (tv - problem.C_n))
    box_slack = float(max(np.max(np.abs(sol.gamma_minus * (u + B))), np.max(np.abs(sol.gamma_plus * (u - B)))))
    dual = float(max(0.0, -sol.lam, -np.min(sol.gamma_plus), -np.min(sol.gamma_minus)))
    sub = float(max(0.0, np.max(np.abs(sol.s)) - 1.0)) if n > 1 else 0.0
    sign = 0.0
    if n > 1:
        du = np.diff(u, axis=0)
        moving = np.abs(du) > SIGN_TOL
        if moving.any() and sol.lam > 0:
            sign = float(np.max(np.abs(sol.s[moving] - np.sign(du[moving]))))
    return KktReport(
        stationarity=stat,
        tv_slackness=tv_slack,
        box_slackness=box_slack,
        dual_feasibility=dual,
        subgradient_box=sub,
        sign_consistency=sign,
        primal_tv=max(0.0, tv - problem.C_n),
        primal_box=max(0.0, float(np.max(np.abs(u))) - B),
        tol=tol,
    )


def _finish(problem, sol):
    sol.kkt_residuals = kkt_check(problem, sol).as_dict()
    sol.objective = problem.objective(sol.u)
    return sol


def _root_search(f, lo, hi, f_lo, f_hi, target_tol, width_tol, max_iter):
    """Illinois regula falsi for a continuous non-increasing f with f(lo)>0>f(hi).

    Returns (x, f(x)) for the evaluated point with f <= 0 closest to the root.
    """
    side = 0
    best = (hi, f_hi)
    for _ in range(max_iter):
        if hi - lo <= width_tol:
            break
        x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        fx = f(x)
        if fx <= 0 and fx > best[1]:
            best = (x, fx)
        if abs(fx) <= target_tol and fx <= 0:
            break
        if fx > 0:
            lo, f_lo = x, fx
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = x, fx
            if side == 1:
                f_lo *= 0.5
            side = 1
    return best


def solve_1d_squared(problem: OracleProblem, max_iter=200) -> OracleSolution:
    """Exact solver for the box-constrained, TV-budgeted squared-loss program."""
    if problem.d != 1 or not problem.is_squared:
        raise TypeError("solve_1d_squared needs d = 1 and squared scalar losses")
    y = problem.labels
    n, B, C = problem.n, problem.B, problem.C_n
    two_s = 2.0 * problem.loss_scale
    trace = []

    def certificate(mu):
        u, x, v = tv_box_prox(y, mu, B)
        lam = two_s * mu
        s = v[:-1] / mu if mu > 0 else np.zeros(n - 1)
        gp = two_s * np.maximum(x - u, 0.0)
        gm = two_s * np.maximum(u - x, 0.0)
        return OracleSolution(u[:, None], lam, s[:, None], gp[:, None], gm[:, None], trace=trace)

    u0 = np.clip(y, -B, B)
    tv0 = total_variation(u0)
    trace.append((0.0, tv0))
    if tv0 <= C:
        return _finish(problem, certificate(0.0))

    mu_hi = float(np.max(np.abs(np.cumsum(y - y.mean()))))
    if C == 0.0:
        sol = certificate(mu_hi)
        # the prox at mu_hi is the constant mean up to rounding; pin it exactly
        sol.u[:] = np.clip(y.mean(), -B, B)
        trace.append((two_s * mu_hi, 0.0))
        return _finish(problem, sol)

    def excess(mu):
        tv = total_variation(tv_box_prox(y, mu, B)[0])
        trace.append((two_s * mu, tv))
        return tv - C

    f_hi = excess(mu_hi)
    mu, _ = _root_search(
        excess,
        0.0,
        mu_hi,
        tv0 - C,
        f_hi,
        target_tol=1e-11 * max(1.0, C),
        width_tol=1e-13 * max(1.0, mu_hi),
        max_iter=max_iter,
    )
    return _finish(problem, certificate(mu))


def trace_is_monotone(trace, tol=1e-9) -> bool:
    """TV(u(lam)) must be non-increasing in lam along the search."""
    pts = sorted(trace)
    tvs = np.array([tv for _, tv in pts])
    return bool(np.all(np.diff(tvs) <= tol * max(1.0, float(np.max(np.abs(tvs))))))


# ---------------------------------------------------------------------------
# general smooth losses


def _box_tv_prox_cols(Z, mu, B):
    U = np.empty_like(Z)
    X = np.empty_like(Z)
    V = np.empty_like(Z)
    for k in range(Z.shape[1]):
        U[:, k], X[:, k], V[:, k] = tv_box_prox(Z[:, k], mu, B)
    return U, X, V


def _penalized(stack, scale, lam, B, L, U0, tol, max_iter):
    """FISTA with adaptive restart on scale*sum f + lam*TV over the box."""
    mu = lam / L

    def F(U):
        return scale * float(np.sum(stack.values(U)))

    def grad(U):
        return scale * stack.grads(U)

    X = np.clip(U0, -B, B)
    Y = X
    tk = 1.0
    FX = F(X) + lam * total_variation(X)
    res = np.inf
    for it in range(1, max_iter + 1):
        Xn = _box_tv_prox_cols(Y - grad(Y) / L, mu, B)[0]
        res = L * float(np.max(np.abs(Xn - Y)))
        FXn = F(Xn) + lam * total_variation(Xn)
        if FXn > FX + 1e-15 * max(1.0, abs(FX)):
            # restart momentum from the last accepted iterate
            Y = X
            tk = 1.0
            continue
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        Y = Xn + ((tk - 1.0) / tn) * (Xn - X)
        X, FX, tk = Xn, FXn, tn
        if res <= tol:
            break
    return X, res, it


def _multi_certificate(stack, scale, lam, B, L, U):
    """Certificate at U from one extra forward-backward step."""
    G = scale * stack.grads(U)
    Z = U - G / L
    mu = lam / L
    Uc, X, V = _box_tv_prox_cols(Z, mu, B)
    n, d = U.shape
    s = V[:-1] / mu if mu > 0 else np.zeros((n - 1, d))
    gp = L * np.maximum(X - Uc, 0.0)
    gm = L * np.maximum(Uc - X, 0.0)
    if mu == 0:
        # lam = 0: all stationarity must come from the box multipliers
        Gc = scale * stack.grads(Uc)
        gp = np.where(Uc >= B, np.maximum(-Gc, 0.0), 0.0)
        gm = np.where(Uc <= -B, np.maximum(Gc, 0.0), 0.0)
    return OracleSolution(Uc, lam, s, gp, gm)


def _constant_solution(problem, stack, L, tol, max_iter):
    """C_n = 0: a single point minimising the summed loss over the box."""
    n, d, B, scale = problem.n, problem.d, problem.B, problem.loss_scale
    u = np.zeros(d)
    step = 1.0 / (n * L)
    for _ in range(max_iter):
        g = scale * np.sum(stack.grads(np.broadcast_to(u, (n, d))), axis=0)
        un = np.clip(u - step * g, -B, B)
        if np.max(np.abs(un - u)) * n * L <= tol:
            u = un
            break
        u = un
    U = np.broadcast_to(u, (n, d)).copy()
    G = scale * stack.grads(U)
    total = G.sum(axis=0)
    gp = np.zeros((n, d))
    gm = np.zeros((n, d))
    for k in range(d):
        # spread the net boundary force evenly over the rounds
        if u[k] >= B and total[k] < 0:
            gp[:, k] = -total[k] / n
        elif u[k] <= -B and total[k] > 0:
            gm[:, k] = total[k] / n
    V = np.cumsum(G - gm + gp, axis=0)
    lam = float(np.max(np.abs(V[:-1]))) if n > 1 else 0.0
    s = V[:-1] / lam if lam > 0 else np.zeros((n - 1, d))
    return OracleSolution(U, lam, s, gp, gm)


def solve_multi(problem: OracleProblem, L=None, tol=1e-7, max_iter=100_000, kkt_tol=1e-5,
                max_search=200) -> OracleSolution:
    """Penalised proximal gradient plus a search on lam for the TV budget."""
    stack = _Stack(problem)
    n, d, B, C, scale = problem.n, problem.d, problem.B, problem.C_n, problem.loss_scale
    L = scale * stack.smoothness() if L is None else float(L)
    trace = []

    def run(lam, U0):
        U, res, _ = _penalized(stack, scale, lam, B, L, U0, tol, max_iter)
        if res > tol:
            raise ConvergenceError(f"FISTA did not reach {tol} at lam={lam}", {"gradient_mapping": res})
        return U

    if C == 0.0:
        sol = _constant_solution(problem, stack, L, tol, max_iter)
        trace.append((sol.lam, 0.0))
        sol.trace = trace
        return _check_multi(problem, sol, kkt_tol)

    U = run(0.0, np.zeros((n, d)))
    tv0 = total_variation(U)
    trace.append((0.0, tv0))
    if tv0 <= C:
        sol = _multi_certificate(stack, scale, 0.0, B, L, U)
        sol.trace = trace
        return _check_multi(problem, sol, kkt_tol)

    lam_hi = 1.0
    U_hi = run(lam_hi, U)
    while total_variation(U_hi) > 1e-12:
        lam_hi *= 2.0
        U_hi = run(lam_hi, U_hi)
    trace.append((lam_hi, total_variation(U_hi)))

    cache = {"U": U}

    def excess(lam):
        cache["U"] = run(lam, cache["U"])
        tv = total_variation(cache["U"])
        trace.append((lam, tv))
        return tv - C

    lam, _ = _root_search(
        excess,
        0.0,
        lam_hi,
        tv0 - C,
        total_variation(U_hi) - C,
        target_tol=1e-9 * max(1.0, C),
        width_tol=1e-13 * lam_hi,
        max_iter=max_search,
    )
    U = run(lam, cache["U"])
    sol = _multi_certificate(stack, scale, lam, B, L, U)
    sol.trace = trace
    return _check_multi(problem, sol, kkt_tol)


def _check_multi(problem, sol, kkt_tol):
    sol = _finish(problem, sol)
    report = kkt_check(problem, sol, kkt_tol)
    if not report.passed:
        raise ConvergenceError("multi-dimensional oracle failed its KKT certificate", report.as_dict())
    return sol
