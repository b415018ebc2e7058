"""Follow-the-Leading-History over a growing pool of base learners."""
from __future__ import annotations

import numpy as np

from .core import Box, CurvatureInfo, LossSpec, NonFiniteError, TvRegretError
from .experts import OgdPool, OnsPool, exp_concave_gamma

PRUNE_NONE = "none"
PRUNE_LOG = "log"

WEIGHT_FLOOR = 1e-300
# pool size stays below POOL_SIZE_SLOPE * log2(t) + 2 under dyadic pruning
POOL_SIZE_SLOPE = 2


class EmptyPool(TvRegretError, IndexError):
    pass


def trailing_zeros(r: int) -> int:
    return (r & -r).bit_length() - 1


def lifetime(r: int) -> int:
    """Rounds an expert born at round r stays alive under dyadic pruning."""
    return 2 ** (trailing_zeros(r) + 2)


def alive_mask(births, t) -> np.ndarray:
    """Experts still alive at round t (born at r, alive while t < r + lifetime(r))."""
    births = np.asarray(births, dtype=np.int64)
    return t < births + 4 * (births & -births)


class MetaState:
    """FLH state: expert pool, birth rounds and the probability vector ``v``.

    ``t`` is the current round (1-based).  Before round t is played the pool
    holds the experts born at rounds <= t (minus pruned ones).
    """

    def __init__(self, pool, zeta_meta: float, pruning=PRUNE_NONE):
        if pruning not in (PRUNE_NONE, PRUNE_LOG):
            raise ValueError(f"unknown pruning mode {pruning!r}")
        self.pool = pool
        self.zeta_meta = float(zeta_meta)
        self.pruning = pruning
        self.t = 1
        self.births = np.array([1], dtype=np.int64)
        self.v = np.array([1.0])
        pool.add()
        self._last_predictions = None

    @property
    def size(self):
        return len(self.births)

    @property
    def experts(self):
        return [(int(b), self.pool.state(i)) for i, b in enumerate(self.births)]


def flh_predict(state: MetaState) -> np.ndarray:
    if state.size == 0:
        raise EmptyPool("FLH pool is empty")
    P = state.pool.predictions()
    state._last_predictions = P.copy()
    return state.v @ P


def flh_update(state: MetaState, loss: LossSpec) -> MetaState:
    """Reweight, step every live expert, add the expert born at t+1, prune.

    Mutates and returns ``state``.
    """
    t = state.t
    P = state._last_predictions if state._last_predictions is not None else state.pool.predictions()
    losses = np.atleast_1d(loss.value(P))
    if not np.all(np.isfinite(losses)):
        raise NonFiniteError("non-finite expert loss", t)
    w = state.v * np.exp(-state.zeta_meta * (losses - losses.min()))
    v_hat = w / w.sum()
    if v_hat.min() < WEIGHT_FLOOR:
        v_hat = np.maximum(v_hat, WEIGHT_FLOOR)
        v_hat /= v_hat.sum()

    state.pool.step(loss, round_index=t)

    inv = 1.0 / (t + 1)
    state.v = np.append(v_hat * (1.0 - inv), inv)
    state.births = np.append(state.births, t + 1)
    state.pool.add()
    state.t = t + 1
    state._last_predictions = None
    if state.pruning == PRUNE_LOG:
        prune_pool(state, state.t)
    return state


def prune_pool(state: MetaState, t: int) -> MetaState:
    """Drop experts whose dyadic lifetime has expired by round t; renormalise."""
    if state.pruning != PRUNE_LOG:
        return state
    mask = alive_mask(state.births, t)
    if mask.all():
        return state
    state.births = state.births[mask]
    state.pool.keep(mask)
    v = state.v[mask]
    state.v = v / v.sum()
    return state


GAME_SQUARED = "squared"
GAME_STRONGLY_CONVEX = "strongly_convex"
GAME_EXP_CONCAVE = "exp_concave"


def flh_meta_rate(curv: CurvatureInfo, game: str, d: int = 1) -> float:
    if game == GAME_SQUARED:
        if curv.G + curv.B <= 0:
            raise ValueError("squared game needs G + B > 0")
        return 1.0 / (2.0 * (curv.G + curv.B) ** 2)
    if game == GAME_STRONGLY_CONVEX:
        if curv.H <= 0:
            raise ValueError("strongly convex game needs H > 0")
        return 1.0 / (2.0 * (2.0 * curv.B + curv.G_inf / curv.H) ** 2)
    if game == GAME_EXP_CONCAVE:
        if curv.alpha <= 0:
            raise ValueError("exp-concave game needs alpha > 0")
        return 1.0 / (2.0 * exp_concave_gamma(curv, d) ** 2)
    raise ValueError(f"unknown game {game!r}")


class FLH:
    """Convenience wrapper: FLH over OGD or ONS experts with predict/update."""

    def __init__(self, dset, zeta_meta, base="ogd", pruning=PRUNE_NONE, **base_kw):
        if base == "ogd":
            pool = OgdPool(dset, **base_kw)
        elif base == "ons":
            pool = OnsPool(dset, **base_kw)
        else:
            raise ValueError(f"unknown base learner {base!r}")
        self.dset = dset
        self.state = MetaState(pool, zeta_meta, pruning)

    def predict(self):
        return flh_predict(self.state)

    def update(self, loss):
        flh_update(self.state, loss)

    @property
    def t(self):
        return self.state.t

    @property
    def size(self):
        return self.state.size


def flh_ogd(B, zeta_meta, pruning=PRUNE_NONE, dim=1):
    return FLH(Box(B, dim), zeta_meta, base="ogd", pruning=pruning)
