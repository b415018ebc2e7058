"""Independent reference implementations used only by the tests."""
import numba
import numpy as np

GRID_STEP = 0.01


@numba.njit(cache=True)
def _grid_dp(y, vals, K, scale):
    V = vals.shape[0]
    inf = np.inf
    D = np.full((V, K + 1), inf)
    for i in range(V):
        D[i, 0] = scale * (y[0] - vals[i]) ** 2
    up = np.empty_like(D)
    down = np.empty_like(D)
    for t in range(1, y.shape[0]):
        # up[j, k] = min_{i <= j} D[i, k - (j - i)], one grid step per unit of budget
        for j in range(V):
            for k in range(K + 1):
                best = D[j, k]
                if j > 0 and k > 0 and up[j - 1, k - 1] < best:
                    best = up[j - 1, k - 1]
                up[j, k] = best
        for j in range(V - 1, -1, -1):
            for k in range(K + 1):
                best = D[j, k]
                if j < V - 1 and k > 0 and down[j + 1, k - 1] < best:
                    best = down[j + 1, k - 1]
                down[j, k] = best
        for j in range(V):
            c = scale * (y[t] - vals[j]) ** 2
            for k in range(K + 1):
                D[j, k] = min(up[j, k], down[j, k]) + c
    best = inf
    for i in range(V):
        for k in range(K + 1):
            if D[i, k] < best:
                best = D[i, k]
    return best


def grid_dp_1d(y, C, B, step=GRID_STEP, scale=0.5):
    """Exact optimum of scale * sum (y_t - u_t)^2 over u_t on the grid
    {-B, -B + step, ..., B} with sum |u_{t+1} - u_t| <= C.

    Dynamic program over (grid value, TV used in grid units).  The transition
    min_i D[i, k - |i - j|] is split into i <= j and i >= j, each a running
    minimum along a diagonal of the (value, budget) table.
    """
    y = np.asarray(y, dtype=float)
    V = int(round(2 * B / step)) + 1
    vals = -B + step * np.arange(V)
    K = int(np.floor(C / step + 1e-9))
    return float(_grid_dp(y, vals, K, float(scale)))


def cvxpy_tv_program(centers, weights, C, B, scale=1.0):
    """scale * sum_t w_t ||u_t - c_t||^2 s.t. L1 TV <= C, box B, via cvxpy."""
    import cvxpy as cp

    centers = np.asarray(centers, dtype=float)
    n, d = centers.shape
    U = cp.Variable((n, d))
    obj = scale * cp.sum(cp.multiply(np.repeat(np.asarray(weights, dtype=float)[:, None], d, axis=1),
                                     cp.square(U - centers)))
    cons = [cp.abs(U) <= B]
    if n > 1:
        cons.append(cp.sum(cp.abs(U[1:] - U[:-1])) <= C)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL) if "CLARABEL" in cp.installed_solvers() else prob.solve()
    return float(prob.value), U.value


def naive_flh(predictions_fn, losses, zeta):
    """Textbook FLH weights with explicit loops (no pruning).

    ``predictions_fn(t)`` returns the list of expert predictions at round t
    (experts born at 1..t).  Returns the list of weight vectors.
    """
    v = [1.0]
    history = []
    for t, loss in enumerate(losses, start=1):
        preds = predictions_fn(t)
        history.append(list(v))
        ls = [loss(p) for p in preds]
        m = min(ls)
        w = [vi * np.exp(-zeta * (li - m)) for vi, li in zip(v, ls)]
        s = sum(w)
        v = [wi / s * (1 - 1 / (t + 1)) for wi in w] + [1 / (t + 1)]
    return history


def scalar_ogd_path(labels, B, start_round):
    """Fresh 1/(2t) OGD run on (y - x)^2 from ``start_round`` (1-based)."""
    x = 0.0
    out = []
    for k, y in enumerate(labels[start_round - 1 :], start=1):
        out.append(x)
        x = float(np.clip(x - (1.0 / (2 * k)) * 2 * (x - y), -B, B))
    return np.array(out)
