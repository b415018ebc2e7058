"""JSON (de)serialisation of oracle problems and solutions.

Problem schema::

    {"type": "oracle_problem", "C_n": float, "B": float, "loss_scale": float,
     "G": float | null, "loss": "squared" | "quadratic",
     "labels": [..]               # squared: length n
     "centers": [[..], ..], "weights": [..]   # quadratic: n x d, n}

Solution schema::

    {"type": "oracle_solution", "u": [[..]], "lam": float, "s": [[..]],
     "gamma_plus": [[..]], "gamma_minus": [[..]], "kkt_residuals": {..},
     "trace": [[lam, tv], ..], "objective": float}
"""
from __future__ import annotations

import json

import numpy as np

from ..core import QuadraticSurrogate, SquaredScalar, CurvatureInfo
from .solve import OracleProblem, OracleSolution, squared_problem


def problem_to_dict(problem: OracleProblem) -> dict:
    out = {
        "type": "oracle_problem",
        "C_n": float(problem.C_n),
        "B": float(problem.B),
        "loss_scale": float(problem.loss_scale),
        "G": None if problem.G is None else float(problem.G),
    }
    if problem.is_squared:
        out["loss"] = "squared"
        out["labels"] = problem.labels.tolist()
    elif all(isinstance(f, QuadraticSurrogate) for f in problem.losses):
        out["loss"] = "quadratic"
        out["centers"] = [f.center.tolist() for f in problem.losses]
        out["weights"] = [float(f.weight) for f in problem.losses]
    else:
        raise TypeError("only squared and quadratic losses are serialisable")
    return out


def problem_from_dict(d: dict) -> OracleProblem:
    if d.get("type") != "oracle_problem":
        raise ValueError("not an oracle problem record")
    G = d.get("G")
    if d["loss"] == "squared":
        return squared_problem(d["labels"], d["C_n"], d["B"], G=G, loss_scale=d.get("loss_scale", 0.5))
    if d["loss"] == "quadratic":
        curv = None if G is None else CurvatureInfo(G=G, G_inf=G, B=d["B"])
        losses = [QuadraticSurrogate(np.asarray(c, dtype=float), w, curv) for c, w in zip(d["centers"], d["weights"])]
        return OracleProblem(losses, d["C_n"], d["B"], d.get("loss_scale", 1.0), G)
    raise ValueError(f"unknown loss kind {d['loss']!r}")


def solution_to_dict(sol: OracleSolution) -> dict:
    return {
        "type": "oracle_solution",
        "u": sol.u.tolist(),
        "lam": float(sol.lam),
        "s": sol.s.tolist(),
        "gamma_plus": sol.gamma_plus.tolist(),
        "gamma_minus": sol.gamma_minus.tolist(),
        "kkt_residuals": sol.kkt_residuals,
        "trace": [[float(a), float(b)] for a, b in sol.trace],
        "objective": float(sol.objective),
    }


def solution_from_dict(d: dict) -> OracleSolution:
    if d.get("type") != "oracle_solution":
        raise ValueError("not an oracle solution record")
    n = len(d["u"])
    dim = len(d["u"][0])

    def arr(key, rows):
        a = np.asarray(d[key], dtype=float)
        return a.reshape(rows, dim)

    return OracleSolution(
        u=arr("u", n),
        lam=float(d["lam"]),
        s=arr("s", n - 1),
        gamma_plus=arr("gamma_plus", n),
        gamma_minus=arr("gamma_minus", n),
        kkt_residuals=dict(d.get("kkt_residuals", {})),
        trace=[tuple(x) for x in d.get("trace", [])],
        objective=float(d.get("objective", float("nan"))),
    )


def save_json(obj: dict, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
