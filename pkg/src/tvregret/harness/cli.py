"""Command line interface.  Exit status is 0 iff every audit passes."""
from __future__ import annotations

import argparse
import json
import sys

from ..adversary import gen_example1
from ..oracle.diagnostics import detect_structures, lambda_length_audit
from ..oracle.io import (
    load_json,
    problem_from_dict,
    problem_to_dict,
    save_json,
    solution_from_dict,
    solution_to_dict,
)
from ..oracle.solve import kkt_check, solve_1d_squared, solve_multi
from .engine import (
    ExperimentConfig,
    decomposition_probe_example1,
    fit_exponent,
    read_csv,
    run_experiment,
    sweep,
)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_config(path, seed):
    cfg = ExperimentConfig.from_dict(load_json(path))
    if seed is not None:
        cfg.seed = seed
        cfg.scenario.seed = seed
    return cfg


def cmd_run(args):
    cfg = _load_config(args.config, args.seed)
    if args.out:
        cfg.output = args.out
    res = run_experiment(cfg)
    print(json.dumps(res.summary, sort_keys=True))
    return 0 if res.audits["passed"] else 1


def cmd_sweep(args):
    cfg = _load_config(args.config, args.seed)
    rows = sweep(cfg, csv_path=args.out, record_dir=args.records)
    for r in rows:
        print(f"n={r['n']} C_n={r['C_n']:g} regret={r['regret']:.6g} M={r['partition_size']}")
    return 0 if all(r["audits_passed"] for r in rows) else 1


def _solve(problem):
    if problem.d == 1 and problem.is_squared:
        return solve_1d_squared(problem)
    return solve_multi(problem)


def _audit_lambda(problem, sol):
    report = detect_structures(sol.u, problem.B)
    G = problem.G if problem.G is not None else 0.0
    if problem.d == 1 and problem.is_squared:
        return lambda_length_audit(sol.lam, report, G, B=problem.B)
    return lambda_length_audit(sol.lam, report, G)


def cmd_oracle(args):
    problem = problem_from_dict(load_json(args.problem))
    sol = _solve(problem)
    report = kkt_check(problem, sol, args.tol)
    if args.out:
        save_json(solution_to_dict(sol), args.out)
    _emit({"lam": sol.lam, "objective": sol.objective, "tv": sol.tv(), "kkt": report.as_dict()})
    return 0 if report.passed else 1


def cmd_verify(args):
    doc = load_json(args.problem)
    if "problem" in doc:  # combined file written by `example1 --out`
        problem, sol = problem_from_dict(doc["problem"]), solution_from_dict(doc["solution"])
    else:
        if args.solution is None:
            raise SystemExit("verify: a solution file is required unless the problem file is combined")
        problem, sol = problem_from_dict(doc), solution_from_dict(load_json(args.solution))
    report = kkt_check(problem, sol, args.tol)
    audit = _audit_lambda(problem, sol) if problem.G is not None else None
    out = {"kkt": report.as_dict(), "lambda_length": None if audit is None else audit.as_dict()}
    _emit(out, args.out)
    ok = report.passed and (audit is None or audit.passed)
    return 0 if ok else 1


def cmd_example1(args):
    ex = gen_example1(args.n)
    problem = ex.problem()
    sol = ex.solution()
    report = kkt_check(problem, sol, args.tol)
    sol.kkt_residuals = report.as_dict()
    if args.out:
        save_json({"problem": problem_to_dict(problem), "solution": solution_to_dict(sol)}, args.out)
    _emit({"n": ex.n, "requested_n": ex.requested_n, "lam": ex.lam, "C_n": ex.C_n, "kkt": report.as_dict()})
    return 0 if report.passed else 1


def cmd_probe(args):
    rows = [decomposition_probe_example1(n).as_dict() for n in args.n]
    out = {"points": rows}
    if len(rows) >= 4:
        out["fit"] = fit_exponent([(r["n"], r["probe"]) for r in rows]).as_dict()
    _emit(out, args.out)
    return 0


def cmd_fit(args):
    rows = read_csv(args.csv)
    fit = fit_exponent([(float(r["n"]), float(r[args.column])) for r in rows])
    _emit(fit.as_dict(), args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tvregret", description="dynamic regret experiments and TV oracle tools")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tol=1e-6):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--tol", type=float, default=tol)

    sp = sub.add_parser("run", help="one experiment from a JSON config")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="grid of (n, C_n) points; --out writes CSV")
    sp.add_argument("config")
    sp.add_argument("--records", default=None, help="directory for per-point JSONL files")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="solve and certify an oracle problem file")
    sp.add_argument("problem")
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("verify", help="KKT check and lambda-length audit of a solution file")
    sp.add_argument("problem", help="problem file, or a combined problem + solution file")
    sp.add_argument("solution", nargs="?")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("example1", help="emit the explicit Example 1 construction")
    sp.add_argument("--n", type=int, default=4096)
    common(sp)
    sp.set_defaults(func=cmd_example1)

    sp = sub.add_parser("probe", help="decomposition probe on Example 1 over several n")
    sp.add_argument("--n", type=int, nargs="+", default=[4096, 20736, 65536, 160000])
    common(sp)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("fit", help="log-log exponent fit on a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--column", default="regret")
    common(sp)
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
