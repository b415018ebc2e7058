"""Shared domain types: losses, decision sets, regret accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class TvRegretError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TvRegretError, ValueError):
    pass


class LabelBoundError(TvRegretError, ValueError):
    pass


class UnsupportedProjection(TvRegretError, NotImplementedError):
    pass


class NonFiniteError(TvRegretError, FloatingPointError):
    def __init__(self, message, round_index=None):
        if round_index is not None:
            message = f"{message} (round {round_index})"
        super().__init__(message)
        self.round_index = round_index


class AuditError(TvRegretError, AssertionError):
    def __init__(self, message, round_index=None):
        if round_index is not None:
            message = f"{message} (round {round_index})"
        super().__init__(message)
        self.round_index = round_index


class ConvergenceError(TvRegretError, RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass(frozen=True)
class CurvatureInfo:
    """Curvature and scale constants attached to a loss.

    H is the strong-convexity modulus, alpha the exp-concavity modulus,
    G / G_inf the L2 / L-infinity gradient bounds and B the box radius.
    For the scalar squared-loss game G doubles as the label bound.
    """

    H: float = 0.0
    alpha: float = 0.0
    G: float = 1.0
    G_inf: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        for name in ("H", "alpha", "G", "G_inf", "B"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"CurvatureInfo.{name} must be finite and >= 0, got {v}")

    def check_squared_game(self):
        """Labels in [-G, G], predictions in [-B, B], B >= 1 and G >= B."""
        if self.B < 1 or self.G < self.B:
            raise ValueError(f"squared game needs 1 <= B <= G, got B={self.B}, G={self.G}")

    def check_exp_concave(self):
        if min(self.G, self.G_inf, self.B) < 1:
            raise ValueError("exp-concave setting needs min(G, G_inf, B) >= 1")
        if self.alpha <= 0:
            raise ValueError("exp-concave setting needs alpha > 0")


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise DimensionError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


class LossSpec:
    """A single round's loss with value and gradient oracles.

    ``value`` and ``grad`` accept either a point of shape (d,) or a batch of
    points of shape (k, d); batched calls return shape (k,) and (k, d).
    """

    curvature: Optional[CurvatureInfo]

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def smoothness(self) -> Optional[float]:
        """Gradient Lipschitz constant when known in closed form."""
        return None


@dataclass(frozen=True)
class SquaredScalar(LossSpec):
    """(y - x)^2 on the real line."""

    y: float
    curvature: Optional[CurvatureInfo] = None

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise NonFiniteError(f"label {self.y} is not finite")
        if self.curvature is not None and abs(self.y) > self.curvature.G + 1e-12:
            raise LabelBoundError(f"|y|={abs(self.y)} exceeds label bound G={self.curvature.G}")

    @property
    def dim(self):
        return 1

    def value(self, x):
        x = _as_points(x, 1)
        return (self.y - x[..., 0]) ** 2 if x.ndim > 1 else float((self.y - x[0]) ** 2)

    def grad(self, x):
        x = _as_points(x, 1)
        return 2.0 * (x - self.y)

    def smoothness(self):
        return 2.0


@dataclass(frozen=True)
class QuadraticSurrogate(LossSpec):
    """weight * ||x - center||^2."""

    center: np.ndarray
    weight: float = 1.0
    curvature: Optional[CurvatureInfo] = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not np.all(np.isfinite(c)):
            raise NonFiniteError("surrogate center is not finite")
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.shape[0]

    def value(self, x):
        x = _as_points(x, self.dim)
        r = np.sum((x - self.center) ** 2, axis=-1)
        return self.weight * r if x.ndim > 1 else float(self.weight * r)

    def grad(self, x):
        x = _as_points(x, self.dim)
        return 2.0 * self.weight * (x - self.center)

    def smoothness(self):
        return 2.0 * self.weight


@dataclass(frozen=True)
class GeneralSmooth(LossSpec):
    """Loss given by user callables.

    ``value_fn`` and ``grad_fn`` must accept the same (d,) / (k, d) inputs as
    :meth:`LossSpec.value`.  ``lipschitz_grad`` is optional.
    """

    value_fn: Callable
    grad_fn: Callable
    d: int
    curvature: Optional[CurvatureInfo] = None
    lipschitz_grad: Optional[float] = None

    @property
    def dim(self):
        return self.d

    def value(self, x):
        x = _as_points(x, self.d)
        v = self.value_fn(x)
        return np.asarray(v, dtype=float) if x.ndim > 1 else float(v)

    def grad(self, x):
        x = _as_points(x, self.d)
        return np.asarray(self.grad_fn(x), dtype=float).reshape(x.shape)

    def smoothness(self):
        return self.lipschitz_grad


def eval_loss(loss: LossSpec, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != loss.dim:
        raise DimensionError(f"point of shape {x.shape} does not match loss dimension {loss.dim}")
    return float(loss.value(x))


def eval_grad(loss: LossSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != loss.dim:
        raise DimensionError(f"point of shape {x.shape} does not match loss dimension {loss.dim}")
    return loss.grad(x)


def finite_difference_grad(fun, x, h=1e-6):
    """Central differences of a scalar function at a single point."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# decision sets


def box_qp(Q, v, lo, hi, tol=1e-10, max_iter=200):
    """Minimise 0.5 (z - v)^T Q (z - v) over the box lo <= z <= hi.

    Projected Newton with an Armijo search along the projection arc, falling
    back to a projected-gradient step when the Newton arc fails to descend.
    Returns (z, residual) where residual is the fixed-point residual
    ||z - clip(z - grad / L)||_inf with L the largest eigenvalue of Q.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    L = float(np.linalg.eigvalsh(Q)[-1])

    def obj(z):
        r = z - v
        return 0.5 * r @ Q @ r

    z = np.clip(v, lo, hi)
    res = np.inf
    for _ in range(max_iter):
        g = Q @ (z - v)
        res = float(np.max(np.abs(z - np.clip(z - g / L, lo, hi))))
        if res <= tol:
            break
        bind = 1e-14 * max(1.0, float(np.max(np.abs(hi - lo))))
        fixed = ((z <= lo + bind) & (g > 0)) | ((z >= hi - bind) & (g < 0))
        free = ~fixed
        step = np.zeros_like(z)
        if free.any():
            step[free] = -np.linalg.solve(Q[np.ix_(free, free)], g[free])
        f0 = obj(z)
        t = 1.0
        accepted = False
        for _ in range(60):
            zn = np.clip(z + t * step, lo, hi)
            if obj(zn) <= f0 + 1e-4 * g @ (zn - z) and not np.array_equal(zn, z):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            zn = np.clip(z - g / L, lo, hi)
        z = zn
    return z, res


class DecisionSet:
    """Closed convex set with membership and projection oracles."""

    dim: int

    def residual(self, x) -> float:
        """Amount by which ``x`` violates membership (0 when inside)."""
        raise NotImplementedError

    def contains(self, x, tol=1e-9) -> bool:
        return self.residual(x) <= tol

    def project(self, x, norm="l2"):
        raise NotImplementedError

    def center(self):
        return np.zeros(self.dim)

    def linf_radius(self) -> float:
        """sup over the set of ||w||_inf."""
        raise NotImplementedError

    def diameter(self) -> float:
        """L2 diameter."""
        raise NotImplementedError

    def project_rows(self, X, norm="l2"):
        X = np.asarray(X, dtype=float)
        return np.stack([self.project(x, norm) for x in X]) if len(X) else X.copy()

    def sample(self, rng, size):
        """Random points of the set (not uniform in general)."""
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"expected point of shape ({self.dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("cannot project a non-finite point")
        return x


def _check_norm(norm):
    if norm not in ("l1", "l2"):
        raise UnsupportedProjection(f"unknown projection norm {norm!r}")


@dataclass(frozen=True)
class Box(DecisionSet):
    radius: float
    dim: int = 1

    def residual(self, x):
        return max(0.0, float(np.max(np.abs(x))) - self.radius)

    def project(self, x, norm="l2"):
        _check_norm(norm)
        # componentwise clipping solves both the L1 and L2 problems
        return np.clip(self._check(x), -self.radius, self.radius)

    def project_rows(self, X, norm="l2"):
        _check_norm(norm)
        return np.clip(X, -self.radius, self.radius)

    def linf_radius(self):
        return float(self.radius)

    def diameter(self):
        return 2.0 * self.radius * np.sqrt(self.dim)

    def sample(self, rng, size):
        return rng.uniform(-self.radius, self.radius, size=(size, self.dim))


def _l2_to_l1_ball(x, r):
    """Euclidean projection onto {||y||_1 <= r} by sorting."""
    a = np.abs(x)
    if a.sum() <= r:
        return x.copy()
    mu = np.sort(a)[::-1]
    cs = np.cumsum(mu)
    j = np.arange(1, len(mu) + 1)
    rho = np.nonzero(mu - (cs - r) / j > 0)[0][-1]
    theta = (cs[rho] - r) / (rho + 1.0)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def _l2_to_simplex(x):
    mu = np.sort(x)[::-1]
    cs = np.cumsum(mu)
    j = np.arange(1, len(mu) + 1)
    rho = np.nonzero(mu - (cs - 1.0) / j > 0)[0][-1]
    theta = (cs[rho] - 1.0) / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _l1_to_l2_ball(x, r):
    """argmin ||x - y||_1 subject to ||y||_2 <= r.

    Maximising sum |y_i| with |y_i| <= |x_i| inside the ball is a
    water-filling problem: |y_i| = min(|x_i|, tau) with tau chosen so that
    ||y||_2 = r.
    """
    a = np.abs(x)
    if np.sum(a * a) <= r * r:
        return x.copy()
    s = np.sort(a)
    k = len(s)
    below = 0.0
    for i in range(k):
        # tau in [s[i-1], s[i]]: coordinates i..k-1 are capped at tau
        tau2 = (r * r - below) / (k - i)
        if tau2 <= s[i] * s[i]:
            tau = np.sqrt(max(tau2, 0.0))
            return np.sign(x) * np.minimum(a, tau)
        below += s[i] * s[i]
    return x.copy()


@dataclass(frozen=True)
class L2Ball(DecisionSet):
    radius: float
    dim: int = 1

    def residual(self, x):
        return max(0.0, float(np.linalg.norm(x)) - self.radius)

    def project(self, x, norm="l2"):
        _check_norm(norm)
        x = self._check(x)
        if norm == "l1":
            return _l1_to_l2_ball(x, self.radius)
        nrm = np.linalg.norm(x)
        return x.copy() if nrm <= self.radius else x * (self.radius / nrm)

    def linf_radius(self):
        return float(self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def sample(self, rng, size):
        g = rng.standard_normal((size, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * self.radius * rng.uniform(0, 1, size=(size, 1)) ** (1.0 / self.dim)


@dataclass(frozen=True)
class L1Ball(DecisionSet):
    radius: float
    dim: int = 1

    def residual(self, x):
        return max(0.0, float(np.sum(np.abs(x))) - self.radius)

    def project(self, x, norm="l2"):
        _check_norm(norm)
        # soft-thresholding removes exactly ||x||_1 - r of L1 mass, so the
        # Euclidean projection is also an L1-distance minimiser
        return _l2_to_l1_ball(self._check(x), self.radius)

    def linf_radius(self):
        return float(self.radius)

    def diameter(self):
        return 2.0 * self.radius

    def sample(self, rng, size):
        e = rng.exponential(size=(size, self.dim + 1))
        e /= e.sum(axis=1, keepdims=True)
        return e[:, : self.dim] * rng.choice([-1.0, 1.0], size=(size, self.dim)) * self.radius


@dataclass(frozen=True)
class Simplex(DecisionSet):
    dim: int = 2

    def residual(self, x):
        x = np.asarray(x, dtype=float)
        return max(0.0, float(-np.min(x)), abs(float(np.sum(x)) - 1.0))

    def project(self, x, norm="l2"):
        _check_norm(norm)
        if norm == "l1":
            raise UnsupportedProjection("L1-distance projection onto the simplex is not supported")
        return _l2_to_simplex(self._check(x))

    def center(self):
        return np.full(self.dim, 1.0 / self.dim)

    def linf_radius(self):
        return 1.0

    def diameter(self):
        return float(np.sqrt(2.0))

    def sample(self, rng, size):
        return rng.dirichlet(np.ones(self.dim), size=size)


@dataclass(frozen=True, eq=False)
class Polytope(DecisionSet):
    """{x : c <= A x <= b} for square, full-rank A.

    Points are handled through the affine bijection x = M z + offset between
    the unit box and the polytope (M = A^-1 D^-1, D = diag(2 / (b - c))).
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    l1_iters: int = 500
    _M: np.ndarray = field(init=False, repr=False)
    _offset: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if A.shape[0] != A.shape[1] or b.shape != (A.shape[0],) or c.shape != b.shape:
            raise DimensionError("Polytope needs square A and matching b, c")
        if np.any(b - c <= 0):
            raise ValueError("Polytope needs b - c > 0 componentwise")
        if np.linalg.cond(A) > 1e12:
            raise ValueError("Polytope matrix A is numerically singular")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        Ainv = np.linalg.inv(A)
        Dinv = np.diag((b - c) / 2.0)
        object.__setattr__(self, "_M", Ainv @ Dinv)
        object.__setattr__(self, "_offset", Ainv @ (Dinv @ np.ones_like(b) + c))

    @property
    def dim(self):
        return self.A.shape[1]

    def to_box(self, x):
        return np.linalg.solve(self._M, np.asarray(x, dtype=float) - self._offset)

    def from_box(self, z):
        return self._M @ np.asarray(z, dtype=float) + self._offset

    def residual(self, x):
        Ax = self.A @ np.asarray(x, dtype=float)
        return max(0.0, float(np.max(self.c - Ax)), float(np.max(Ax - self.b)))

    def project(self, x, norm="l2"):
        _check_norm(norm)
        x = self._check(x)
        if self.residual(x) == 0.0:
            return x.copy()
        Q = self._M.T @ self._M
        z, _ = box_qp(Q, self.to_box(x), -1.0, 1.0)
        if norm == "l2":
            return self.from_box(z)
        # projected subgradient in box coordinates, started at the L2 answer
        best_z = z
        best = np.sum(np.abs(self.from_box(z) - x))
        for k in range(1, self.l1_iters + 1):
            g = self._M.T @ np.sign(self.from_box(z) - x)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            z = np.clip(z - g / (gn * np.sqrt(k)), -1.0, 1.0)
            val = np.sum(np.abs(self.from_box(z) - x))
            if val < best:
                best, best_z = val, z
        return self.from_box(best_z)

    def center(self):
        return self._offset.copy()

    def linf_radius(self):
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * self.dim)).reshape(self.dim, -1).T
        return float(np.max(np.abs(corners @ self._M.T + self._offset)))

    def diameter(self):
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * self.dim)).reshape(self.dim, -1).T
        pts = corners @ self._M.T + self._offset
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.max(np.linalg.norm(diff, axis=-1)))

    def sample(self, rng, size):
        z = rng.uniform(-1, 1, size=(size, self.dim))
        return z @ self._M.T + self._offset


def project(dset: DecisionSet, x, norm="l2"):
    return dset.project(x, norm)


# ---------------------------------------------------------------------------
# regret accounting


def total_variation(w) -> float:
    """sum_t ||w_t - w_{t-1}||_1 for a sequence of shape (n,) or (n, d)."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if len(w) < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(w, axis=0))))


@dataclass
class RegretTrace:
    learner_losses: np.ndarray
    comparator_losses: np.ndarray
    comparator: Optional[np.ndarray] = None
    cumulative_regret: np.ndarray = field(init=False)
    comparator_tv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.learner_losses = np.asarray(self.learner_losses, dtype=float)
        self.comparator_losses = np.asarray(self.comparator_losses, dtype=float)
        if self.learner_losses.shape != self.comparator_losses.shape:
            raise DimensionError("learner and comparator loss sequences differ in length")
        self.cumulative_regret = np.cumsum(self.learner_losses - self.comparator_losses)
        n = len(self.learner_losses)
        if self.comparator is None:
            self.comparator_tv = np.zeros(n)
        else:
            w = np.asarray(self.comparator, dtype=float).reshape(n, -1)
            steps = np.concatenate([[0.0], np.sum(np.abs(np.diff(w, axis=0)), axis=1)])
            self.comparator_tv = np.cumsum(steps)

    @property
    def n(self):
        return len(self.learner_losses)

    @property
    def regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.n else 0.0

    def interval_regret(self, r, s) -> float:
        """Regret over rounds r..s (1-based, inclusive)."""
        return float(np.sum(self.learner_losses[r - 1 : s] - self.comparator_losses[r - 1 : s]))


def regret_trace(learner_losses: Sequence[float], comparator_losses: Sequence[float], comparator=None):
    return RegretTrace(np.asarray(learner_losses), np.asarray(comparator_losses), comparator)
