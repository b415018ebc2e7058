"""Experiment engine: online protocol loop, comparators, sweeps and fits."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..adversary import (
    LOSS_QUADRATIC,
    LOSS_SQUARED,
    LOSS_SQUARED_LINEAR,
    LossStream,
    ScenarioSpec,
    gen_example1,
    gen_scenario,
    sweep_seed,
)
from ..core import (
    AuditError,
    Box,
    CurvatureInfo,
    L1Ball,
    L2Ball,
    QuadraticSurrogate,
    RegretTrace,
    TvRegretError,
    total_variation,
)
from ..meta import FLH, GAME_SQUARED, POOL_SIZE_SLOPE, PRUNE_LOG, PRUNE_NONE, flh_meta_rate
from ..oracle.diagnostics import key_partition
from ..oracle.solve import OracleProblem, solve_1d_squared, solve_multi, squared_problem
from ..reductions import (
    ExpConcaveFLH,
    ScReduction,
    box_to_convex,
    box_to_convex_round,
)

ALG_FLH_OGD = "flh_ogd"
ALG_AFLH_OGD = "aflh_ogd"
ALG_FLH_ONS = "flh_ons"
ALG_SC = "sc_reduction"
ALG_BOX_TO_CONVEX = "box_to_convex"
ALGORITHMS = (ALG_FLH_OGD, ALG_AFLH_OGD, ALG_FLH_ONS, ALG_SC, ALG_BOX_TO_CONVEX)

CMP_ORACLE = "oracle"
CMP_PROVIDED = "provided"
CMP_BEST_FIXED = "best_fixed"
COMPARATORS = (CMP_ORACLE, CMP_PROVIDED, CMP_BEST_FIXED)


class ExperimentError(TvRegretError, RuntimeError):
    def __init__(self, message, round_index=None, state_digest=None):
        super().__init__(f"{message} (round {round_index}, state {state_digest})")
        self.round_index = round_index
        self.state_digest = state_digest


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec
    algorithm: str = ALG_AFLH_OGD
    comparator: str = CMP_ORACLE
    # TV budget for the oracle comparator; defaults to the scenario budget
    C_n: Optional[float] = None
    sweep: List[tuple] = field(default_factory=list)
    output: Optional[str] = None
    seed: int = 0
    record_rounds: bool = True
    # box_to_convex target set: "l2ball" or "l1ball" with this radius
    target_set: str = "l2ball"
    target_radius: float = 1.0
    audit: bool = True

    def __post_init__(self):
        if isinstance(self.scenario, dict):
            self.scenario = ScenarioSpec.from_dict(self.scenario)
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        self.sweep = [tuple(p) for p in self.sweep]

    def to_dict(self):
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ExperimentResult:
    trace: RegretTrace
    predictions: np.ndarray
    comparator: np.ndarray
    summary: dict
    audits: dict
    lam: Optional[float] = None

    @property
    def regret(self):
        return self.trace.regret


def digest(x) -> str:
    return hashlib.sha1(np.ascontiguousarray(x, dtype=np.float64).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# learners


def _make_learner(cfg: ExperimentConfig, stream: LossStream):
    spec = cfg.scenario
    curv = spec.curv
    d = spec.dim
    if cfg.algorithm in (ALG_FLH_OGD, ALG_AFLH_OGD):
        if d != 1 or spec.loss != LOSS_SQUARED:
            raise ValueError("FLH-OGD plays the scalar squared-loss game (d = 1)")
        pruning = PRUNE_LOG if cfg.algorithm == ALG_AFLH_OGD else PRUNE_NONE
        return FLH(Box(curv.B, 1), flh_meta_rate(curv, GAME_SQUARED), base="ogd", pruning=pruning)
    if cfg.algorithm == ALG_SC:
        return ScReduction(d, curv.B, curv.H, curv.G_inf)
    if cfg.algorithm == ALG_FLH_ONS:
        return ExpConcaveFLH(Box(curv.B, d), curv)
    W = _target_set(cfg)
    return box_to_convex(W, curv.G_inf, curv.H)


def _target_set(cfg):
    d = cfg.scenario.dim
    if cfg.target_set == "l2ball":
        return L2Ball(cfg.target_radius, d)
    if cfg.target_set == "l1ball":
        return L1Ball(cfg.target_radius, d)
    raise ValueError(f"unknown target set {cfg.target_set!r}")


# ---------------------------------------------------------------------------
# comparators


def _stream_total(stream: LossStream, x) -> float:
    """sum_t f_t(x) for a fixed point x."""
    x = np.asarray(x, dtype=float)
    if stream.kind == LOSS_SQUARED:
        return float(np.sum((stream.labels[:, 0] - x[0]) ** 2))
    if stream.kind == LOSS_QUADRATIC:
        return float(stream.H / 2.0 * np.sum((stream.labels - x) ** 2))
    return float(np.sum((stream.features @ x - stream.labels[:, 0]) ** 2))


def _stream_total_grad(stream: LossStream, x):
    if stream.kind == LOSS_SQUARED:
        return np.array([2.0 * np.sum(x[0] - stream.labels[:, 0])])
    if stream.kind == LOSS_QUADRATIC:
        return stream.H * np.sum(x - stream.labels, axis=0)
    r = stream.features @ x - stream.labels[:, 0]
    return 2.0 * stream.features.T @ r


def best_fixed(stream: LossStream, B: float, tol=1e-9, max_iter=10_000) -> np.ndarray:
    """Best fixed point in [-B, B]^d: bisection on the derivative sign (d = 1)
    or projected gradient."""
    d = stream.labels.shape[1] if stream.kind != LOSS_SQUARED_LINEAR else stream.features.shape[1]
    if d == 1:
        # comparing values is blind near a flat minimum; the derivative is not
        lo, hi = -B, B
        if _stream_total_grad(stream, np.array([lo]))[0] >= 0:
            return np.array([lo])
        if _stream_total_grad(stream, np.array([hi]))[0] <= 0:
            return np.array([hi])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _stream_total_grad(stream, np.array([mid]))[0] > 0:
                hi = mid
            else:
                lo = mid
        return np.array([0.5 * (lo + hi)])
    n = len(stream)
    if stream.kind == LOSS_QUADRATIC:
        L = stream.H * n
    else:
        L = 2.0 * np.linalg.norm(stream.features, 2) ** 2
    x = np.zeros(d)
    for _ in range(max_iter):
        xn = np.clip(x - _stream_total_grad(stream, x) / L, -B, B)
        if np.max(np.abs(xn - x)) <= tol:
            return xn
        x = xn
    return x


def _oracle_comparator(stream: LossStream, B: float, C_n: float):
    if stream.kind == LOSS_SQUARED:
        sol = solve_1d_squared(squared_problem(stream.labels[:, 0], C_n, B))
        return sol.u, sol.lam
    if stream.kind == LOSS_QUADRATIC:
        losses = [QuadraticSurrogate(c, stream.H / 2.0) for c in stream.labels]
        sol = solve_multi(OracleProblem(losses, C_n, B))
        return sol.u, sol.lam
    raise ValueError("the oracle comparator supports squared and quadratic losses")


def _fast_values(stream: LossStream, X: np.ndarray) -> np.ndarray:
    """f_t(X_t) for every round."""
    if stream.kind == LOSS_SQUARED:
        return (stream.labels[:, 0] - X[:, 0]) ** 2
    if stream.kind == LOSS_QUADRATIC:
        return stream.H / 2.0 * np.sum((stream.labels - X) ** 2, axis=1)
    return (np.sum(stream.features * X, axis=1) - stream.labels[:, 0]) ** 2


# ---------------------------------------------------------------------------
# protocol


def run_experiment(cfg: ExperimentConfig, stream=None, comparator=None) -> ExperimentResult:
    """Predict, reveal, suffer, update for every round of the configured scenario."""
    spec = cfg.scenario
    if stream is None:
        stream, provided = gen_scenario(spec)
    else:
        provided = comparator
    n, d, B = len(stream), spec.dim, spec.curv.B
    C_n = cfg.C_n if cfg.C_n is not None else (spec.budget if spec.budget is not None else total_variation(provided))

    lam = None
    if cfg.comparator == CMP_ORACLE:
        W, lam = _oracle_comparator(stream, B, C_n)
    elif cfg.comparator == CMP_PROVIDED:
        if provided is None:
            raise ValueError("provided comparator requested but none available")
        W = np.asarray(provided, dtype=float).reshape(n, d)
    else:
        W = np.broadcast_to(best_fixed(stream, B), (n, d)).copy()

    learner = _make_learner(cfg, stream)
    X = np.empty((n, d))
    audits = {"rounds": n, "bridge": True, "domination": True, "box_audit": True, "pool_size": True,
              "in_set": True}
    pool_max = 0
    for t in range(n):
        r = t + 1
        try:
            loss = stream[t]
            if cfg.algorithm != ALG_BOX_TO_CONVEX:
                x = np.asarray(learner.predict(), dtype=float).reshape(d)
            if cfg.algorithm in (ALG_FLH_OGD, ALG_AFLH_OGD):
                learner.update(loss)
                size = learner.size
            elif cfg.algorithm == ALG_SC:
                learner.update(loss, comparator=W[t] if cfg.audit else None, round_index=r)
                size = max(learner.pool_sizes)
            elif cfg.algorithm == ALG_FLH_ONS:
                learner.update(loss, comparators=W[t] if cfg.audit else None, round_index=r)
                size = learner.flh.size
            else:
                x, _ = box_to_convex_round(learner, loss, round_index=r)
                size = max(learner.inner.pool_sizes)
        except AuditError as exc:
            key = {ALG_SC: "bridge", ALG_FLH_ONS: "domination"}.get(cfg.algorithm, "box_audit")
            audits[key] = False
            raise ExperimentError(str(exc), r, digest(X[:t])) from exc
        except (TvRegretError, FloatingPointError, ValueError) as exc:
            raise ExperimentError(f"{type(exc).__name__}: {exc}", r, digest(X[:t])) from exc
        if np.max(np.abs(x)) > B + 1e-9:
            audits["in_set"] = False
        X[t] = x
        pool_max = max(pool_max, size)
        pruned = cfg.algorithm != ALG_FLH_OGD
        if pruned and size > POOL_SIZE_SLOPE * math.log2(r + 1) + 2:
            audits["pool_size"] = False

    trace = RegretTrace(_fast_values(stream, X), _fast_values(stream, W), W)
    audits["passed"] = all(v for k, v in audits.items() if k != "rounds")
    summary = {
        "type": "summary",
        "algorithm": cfg.algorithm,
        "comparator": cfg.comparator,
        "scenario": spec.kind,
        "n": n,
        "d": d,
        "C_n": float(C_n),
        "seed": int(spec.seed),
        "regret": trace.regret,
        "comparator_tv": float(trace.comparator_tv[-1]),
        "lam": lam,
        "max_pool_size": int(pool_max),
        "predictions_digest": digest(X),
        "audits_passed": audits["passed"],
    }
    result = ExperimentResult(trace, X, W, summary, audits, lam)
    if cfg.output:
        write_jsonl(result, cfg.output, cfg.record_rounds)
    return result


def round_records(result: ExperimentResult):
    tr = result.trace
    for t in range(tr.n):
        yield {
            "round": t + 1,
            "prediction": digest(result.predictions[t]),
            "learner_loss": float(tr.learner_losses[t]),
            "comparator_loss": float(tr.comparator_losses[t]),
            "cumulative_regret": float(tr.cumulative_regret[t]),
        }


def write_jsonl(result: ExperimentResult, path, record_rounds=True):
    with open(path, "w") as fh:
        if record_rounds:
            for rec in round_records(result):
                fh.write(json.dumps(rec) + "\n")
        fh.write(json.dumps(result.summary, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# sweeps and fits


def sweep(cfg: ExperimentConfig, points: Optional[Sequence[tuple]] = None, csv_path=None,
          record_dir=None) -> List[dict]:
    """Run every (n, C_n) point with a seed split from (cfg.seed, n, C_n)."""
    points = [tuple(p) for p in (points if points is not None else cfg.sweep)]
    if not points:
        raise ValueError("empty sweep")
    rows = []
    for n, C_n in points:
        spec = ScenarioSpec.from_dict({**cfg.scenario.to_dict(), "n": int(n), "budget": float(C_n),
                                       "seed": sweep_seed(cfg.seed, n, C_n)})
        out = None
        if record_dir is not None:
            out = f"{record_dir}/run_n{int(n)}_C{float(C_n):g}.jsonl"
        sub = ExperimentConfig(**{**cfg.__dict__, "scenario": spec, "C_n": float(C_n), "sweep": [],
                                  "output": out})
        res = run_experiment(sub)
        row = dict(res.summary)
        row["partition_size"] = key_partition(res.comparator, spec.curv.B).M
        rows.append(row)
    if csv_path is not None:
        write_csv(rows, csv_path)
    return rows


SWEEP_COLUMNS = ("n", "C_n", "seed", "regret", "comparator_tv", "lam", "partition_size", "max_pool_size",
                 "audits_passed", "predictions_digest")


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in SWEEP_COLUMNS})


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class FitResult:
    slope: float
    intercept: float
    r2: float
    points: list

    def as_dict(self):
        return asdict(self)


def fit_exponent(points) -> FitResult:
    """Least-squares line through (log n, log value)."""
    pts = [(float(x), float(y)) for x, y in points]
    kept = [(x, y) for x, y in pts if x > 0 and y > 0]
    if len(kept) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(kept)} non-positive point(s) from the fit", stacklevel=2)
    if len(kept) < 4:
        raise ValueError("need at least 4 positive points to fit an exponent")
    lx = np.log([x for x, _ in kept])
    ly = np.log([y for _, y in kept])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), kept)


# ---------------------------------------------------------------------------
# Example 1 decomposition probe


@dataclass
class ProbeResult:
    n: int
    bins: list
    values: list
    lam: float
    C_n: float

    @property
    def probe(self) -> float:
        """Value on the second bin; 0 when the partition has a single bin."""
        return self.values[1] if len(self.values) > 1 else 0.0

    @property
    def second_bin_present(self) -> bool:
        return len(self.values) > 1

    def as_dict(self):
        return {"n": self.n, "bins": self.bins, "values": self.values, "lam": self.lam, "C_n": self.C_n,
                "probe": self.probe, "second_bin_present": self.second_bin_present}


def decomposition_probe_example1(n: int, partition="halves") -> ProbeResult:
    """Per-bin sum of (y - Pi(ybar))^2 - (y - u)^2 on the Example 1 stream.

    ``partition="halves"`` uses the two-bin split [1, n/2], [n/2 + 1, n];
    ``partition="key"`` uses the greedy key partition of the oracle output.
    """
    ex = gen_example1(n)
    sol = solve_1d_squared(squared_problem(ex.labels, ex.C_n, ex.B, G=ex.G))
    u = sol.u[:, 0]
    y = ex.labels
    if partition == "halves":
        half = ex.n // 2
        bins = [(1, half), (half + 1, ex.n)]
    elif partition == "key":
        bins = key_partition(u, ex.B).bins
    else:
        raise ValueError(f"unknown partition {partition!r}")
    vals = []
    for a, b in bins:
        yy, uu = y[a - 1 : b], u[a - 1 : b]
        w = float(np.clip(yy.mean(), -ex.B, ex.B))
        vals.append(float(np.sum((yy - w) ** 2 - (yy - uu) ** 2)))
    return ProbeResult(ex.n, [list(b) for b in bins], vals, float(sol.lam), float(ex.C_n))
