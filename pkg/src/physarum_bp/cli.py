"""Command-line front end.

    physarum-bp gen random --n 250 --m 25000 --k 5 --seed 1 --out bundle/
    physarum-bp gen graph --path-nodes 3 --out path3/
    physarum-bp solve bundle/problem.json --out run/ [--plot]
    physarum-bp bench --suite paper --scale 0.1 --out bench/
    physarum-bp oracle bundle/problem.json

Exit codes: 0 converged (or success), 1 not converged, 2 input error.
The log level comes from ``PHYSARUM_BP_LOG`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .core import BasisPursuitProblem, InputError, compute_flux
from .dynamics import dual_error, optimality_residuals, recovery_error
from .generators import (
    RandomBpSpec,
    generate_graph_problem,
    generate_random_bp,
    grid_graph,
    paper_suite,
    path_graph,
    scaled_suite,
)
from .io import ProblemFileNotFound, load_problem, save_problem, write_vector
from .krylov import MODES
from .newton import SolverConfig
from .oracle import OPTIMAL, OracleError, lp_solve_l1
from .stepper import INTEGRATORS, RunResult, StepperConfig, run, write_trace_csv

log = logging.getLogger("physarum_bp")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT = 0, 1, 2

BENCH_COLUMNS = (
    "instance", "n", "m", "k", "seed", "status", "steps", "t", "var", "err_x", "err_dual",
    "primal_obj", "dual_obj", "duality_gap", "newton_iters", "pcg_iters", "wall_seconds",
    "oracle_obj", "oracle_rel_gap",
)


def _setup_logging() -> None:
    level = os.environ.get("PHYSARUM_BP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _fail(msg: str, code: int = EXIT_INPUT) -> int:
    print(json.dumps({"status": "error", "error": msg}))
    return code


# --------------------------------------------------------------------- config

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--dt0", type=float, help="initial time step (default 1)")
    g.add_argument("--tau", type=float, help="stop when var < tau (default 5e-8)")
    g.add_argument("--mu0", type=float, help="initial conductivity (default 1)")
    g.add_argument("--integrator", choices=INTEGRATORS, help="default backward-euler")
    g.add_argument("--forward-dt", type=float, help="fixed step of forward-euler (default 0.1)")
    g.add_argument("--linear-mode", choices=MODES, help="default pcg-with-cache")
    g.add_argument("--pcg-tol", type=float, help="inner tolerance floor (default 1e-12)")
    g.add_argument("--pcg-max-iter", type=int, help="default 200")
    g.add_argument("--precond-refresh", type=int, help="PCG iterations that trigger refactorization (default 30)")
    g.add_argument("--newton-tol", type=float, help="default 1e-11")
    g.add_argument("--max-steps", type=int, help="default 1000")
    g.add_argument("--max-wall", type=float, help="wall-clock budget in seconds")
    g.add_argument("--seed", type=int, help="recorded in the summary; the solver itself draws no random numbers")
    g.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    g.add_argument("--no-timing", action="store_true", help="leave wall_seconds empty in the trace")
    g.add_argument("--plot", action="store_true", help="render convergence figures (needs matplotlib)")


_STEPPER_FLAGS = {
    "dt0": "dt0", "tau": "tau", "mu0": "mu0", "integrator": "integrator",
    "forward_dt": "forward_dt", "max_steps": "max_steps", "max_wall": "max_wall_seconds",
}
_SOLVER_FLAGS = {
    "linear_mode": "linear_mode", "pcg_tol": "pcg_tol", "pcg_max_iter": "pcg_max_iter",
    "precond_refresh": "precond_refresh", "newton_tol": "newton_tol",
}


def _build_configs(args, base_stepper: dict | None = None, base_solver: dict | None = None):
    st = dict(base_stepper or {})
    so = dict(base_solver or {})
    for flag, key in _STEPPER_FLAGS.items():
        if getattr(args, flag, None) is not None:
            st[key] = getattr(args, flag)
    for flag, key in _SOLVER_FLAGS.items():
        if getattr(args, flag, None) is not None:
            so[key] = getattr(args, flag)
    if getattr(args, "no_timing", False):
        st["timing"] = False
    try:
        return StepperConfig(**st), SolverConfig(**so)
    except TypeError as exc:
        raise InputError(f"unknown config key: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# -------------------------------------------------------------------- summary

def summarize(problem: BasisPursuitProblem, result: RunResult) -> dict:
    state, trace = result.state, result.trace
    opt = optimality_residuals(problem, state)
    last = trace[-1] if trace else None
    return {
        "status": result.status,
        "message": result.message,
        "steps": len(trace),
        "t": state.t,
        "final_dt": last.dt if last else None,
        "final_var": last.var if last else None,
        "primal_obj": opt.primal_obj,
        "dual_obj": opt.dual_obj,
        "duality_gap": opt.duality_gap,
        "dual_feasibility": opt.dual_feasibility,
        "err_x": recovery_error(problem, state),
        "err_dual": dual_error(problem, state),
        "min_mu": float(state.mu.min()),
        "newton_iterations": sum(r.newton_iterations for r in trace),
        "pcg_iterations": sum(r.pcg_iterations for r in trace),
        "factorizations": result.linear_solver.factorizations if result.linear_solver else None,
        "wall_seconds": sum(r.wall_seconds for r in trace),
    }


def _write_outputs(out: Path, problem, result, stepper: StepperConfig, solver: SolverConfig, extra=None, plot=False, title=""):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.csv", "w", newline="") as fh:
        write_trace_csv(result.trace, fh, stepper.timing)
    summary = summarize(problem, result)
    summary["config"] = {
        "stepper": _finite_or_none(dataclasses.asdict(stepper)),
        "solver": dataclasses.asdict(solver),
    }
    if extra:
        summary.update(extra)
    if not stepper.timing:
        summary["wall_seconds"] = None
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    write_vector(out / "v.txt", compute_flux(problem, result.state))
    write_vector(out / "mu.txt", result.state.mu)
    write_vector(out / "u.txt", result.state.u)
    if plot:
        from .report import plot_trace

        plot_trace(result.trace, out / "convergence.png", title=title, tau=stepper.tau)
    return summary


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def _finite_or_none(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


# ------------------------------------------------------------------ commands

def cmd_gen(args) -> int:
    if args.kind == "random":
        if args.paper is not None:
            spec = paper_suite(args.paper)
        else:
            if args.n is None or args.m is None or args.k is None:
                return _fail("gen random needs --n, --m and --k (or --paper)")
            spec = RandomBpSpec(args.n, args.m, args.k, seed=args.seed)
        problem = generate_random_bp(spec)
    else:
        if args.path_nodes is not None:
            gspec = path_graph(args.path_nodes)
        elif args.grid is not None:
            gspec = grid_graph(args.grid[0], args.grid[1], seed=args.seed)
        else:
            return _fail("gen graph needs --path-nodes or --grid")
        problem = generate_graph_problem(gspec)
    try:
        path = save_problem(problem, args.out)
    except OSError as exc:
        return _fail(f"cannot write bundle: {exc}")
    print(json.dumps({"status": "ok", "manifest": str(path), "n": problem.n, "m": problem.m}))
    return EXIT_OK


def _load_run_manifest(path: Path):
    """Accept either a problem manifest or a run manifest pointing at one."""
    if not path.is_file():
        raise ProblemFileNotFound(f"problem file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if "problem" not in data:
        return load_problem(path), {}, {}, None
    prob_path = (path.parent / data["problem"]).resolve()
    stepper = dict(data.get("stepper", {}))
    if "integrator" in data:
        stepper["integrator"] = data["integrator"]
    out = data.get("out")
    return load_problem(prob_path), stepper, dict(data.get("solver", {})), (path.parent / out) if out else None


def cmd_solve(args) -> int:
    try:
        problem, st, so, out = _load_run_manifest(Path(args.manifest))
        stepper, solver = _build_configs(args, st, so)
    except ProblemFileNotFound as exc:
        return _fail(str(exc))
    except InputError as exc:
        return _fail(str(exc))
    out = Path(args.out) if args.out else (out or Path("physarum_run"))
    with threadpool_limits(limits=args.threads):
        result = run(problem, stepper, solver)
    extra = {"seed": args.seed if args.seed is not None else problem.meta.get("seed")}
    summary = _write_outputs(out, problem, result, stepper, solver, extra, args.plot, title=Path(args.manifest).parent.name)
    print(json.dumps({k: summary[k] for k in ("status", "steps", "final_var", "primal_obj", "duality_gap", "err_x", "err_dual")}, default=_json_default))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _bench_one(job):
    name, spec, stepper, solver, out, oracle_max_m, plot, threads = job
    with threadpool_limits(limits=threads):
        problem = generate_random_bp(spec)
        result = run(problem, stepper, solver)
        extra = {"instance": name, "n": spec.n, "m": spec.m, "k": spec.k, "seed": spec.seed}
        oracle_obj = None
        if oracle_max_m and spec.m <= oracle_max_m:
            try:
                sol = lp_solve_l1(problem, max_m=oracle_max_m)
                if sol.status == OPTIMAL:
                    oracle_obj = sol.objective
            except OracleError as exc:
                log.warning("oracle skipped for %s: %s", name, exc)
    summary = _write_outputs(out / name, problem, result, stepper, solver, extra, plot, title=name)
    rel = None
    if oracle_obj is not None:
        rel = abs(summary["primal_obj"] - oracle_obj) / max(abs(oracle_obj), 1e-300)
    row = {
        "instance": name, "n": spec.n, "m": spec.m, "k": spec.k, "seed": spec.seed,
        "status": summary["status"], "steps": summary["steps"], "t": summary["t"],
        "var": summary["final_var"], "err_x": summary["err_x"], "err_dual": summary["err_dual"],
        "primal_obj": summary["primal_obj"], "dual_obj": summary["dual_obj"],
        "duality_gap": summary["duality_gap"], "newton_iters": summary["newton_iterations"],
        "pcg_iters": summary["pcg_iterations"], "wall_seconds": summary["wall_seconds"],
        "oracle_obj": oracle_obj, "oracle_rel_gap": rel,
    }
    return row, result.trace


def cmd_bench(args) -> int:
    try:
        stepper, solver = _build_configs(args)
    except InputError as exc:
        return _fail(str(exc))
    out = Path(args.out or "physarum_bench")
    jobs = []
    if args.suite == "paper":
        if not 0 < args.scale <= 1:
            return _fail("--scale must lie in (0, 1]")
        indices = args.instances or [1, 2, 3, 4]
        for i in indices:
            spec = paper_suite(i) if args.scale == 1 else scaled_suite(i, args.scale)
            # the oracle spot-checks the smallest instance only
            oracle = spec.m if i == min(indices) and spec.n * spec.m <= 2_000_000 else 0
            jobs.append((f"paper{i}", spec, stepper, solver, out, oracle, args.plot, args.threads))
    else:
        base = args.seed or 0
        for s in range(args.count):
            spec = RandomBpSpec(10, 30, 3, seed=base + s)
            jobs.append((f"tiny{s:02d}", spec, stepper, solver, out, 2000, args.plot, args.threads))
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    rows = [r for r, _ in results]
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in BENCH_COLUMNS})
    if args.plot:
        from .report import plot_bench

        plot_bench({r["instance"]: tr for r, (_, tr) in zip(rows, results)}, out / "bench.png", tau=stepper.tau)
    gaps = [r["oracle_rel_gap"] for r in rows if r["oracle_rel_gap"] is not None]
    report = {
        "suite": args.suite,
        "instances": len(rows),
        "converged": sum(r["status"] == "converged" for r in rows),
        "max_oracle_rel_gap": max(gaps) if gaps else None,
    }
    (out / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report))
    return EXIT_OK if report["converged"] == report["instances"] else EXIT_NOT_CONVERGED


def cmd_oracle(args) -> int:
    try:
        problem = load_problem(args.manifest)
        sol = lp_solve_l1(problem, max_m=args.max_m)
    except (InputError, OracleError) as exc:
        return _fail(str(exc))
    payload = {
        "status": sol.status,
        "objective": sol.objective,
        "unique": sol.unique,
        "pivots": sol.pivots,
        "v_opt": None if sol.v_opt is None else sol.v_opt.tolist(),
        "dual_u": None if sol.dual_u is None else sol.dual_u.tolist(),
    }
    text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(json.dumps({"status": sol.status, "objective": sol.objective}, default=_json_default))
    else:
        sys.stdout.write(text)
    return EXIT_OK if sol.status == OPTIMAL else EXIT_NOT_CONVERGED


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physarum-bp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a problem bundle")
    gsub = gen.add_subparsers(dest="kind", required=True)
    gr = gsub.add_parser("random", help="row-normalized Gaussian A with a k-sparse solution")
    gr.add_argument("--n", type=int)
    gr.add_argument("--m", type=int)
    gr.add_argument("--k", type=int)
    gr.add_argument("--paper", type=int, choices=(1, 2, 3, 4), help="benchmark suite instance (seed = index)")
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--out", required=True)
    gg = gsub.add_parser("graph", help="transshipment on a path or grid graph")
    gg.add_argument("--path-nodes", type=int)
    gg.add_argument("--grid", type=int, nargs=2, metavar=("ROWS", "COLS"))
    gg.add_argument("--seed", type=int, default=0)
    gg.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    so = sub.add_parser("solve", help="run the dynamics on a bundle or run manifest")
    so.add_argument("manifest")
    so.add_argument("--out")
    _add_solver_flags(so)
    so.set_defaults(func=cmd_solve)

    be = sub.add_parser("bench", help="benchmark suites")
    be.add_argument("--suite", choices=("paper", "tiny"), required=True)
    be.add_argument("--scale", type=float, default=1.0, help="shrink n and m of the benchmark suite")
    be.add_argument("--instances", type=int, nargs="+", choices=(1, 2, 3, 4))
    be.add_argument("--count", type=int, default=20, help="tiny suite size")
    be.add_argument("--jobs", type=int, default=1, help="instances run in parallel")
    be.add_argument("--out")
    _add_solver_flags(be)
    be.set_defaults(func=cmd_bench)

    orc = sub.add_parser("oracle", help="dense simplex reference solution")
    orc.add_argument("manifest")
    orc.add_argument("--max-m", type=int, default=2000)
    orc.add_argument("--out")
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
