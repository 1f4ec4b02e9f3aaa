"""Command-line interface.

Exit codes: 0 ok, 1 flow failure, 2 input error, 3 verification failure,
4 derivative-check failure.
"""
from __future__ import annotations

import argparse
import gc
import os
import sys
import time

import numpy as np

from . import aghf
from .cheb import ChebGrid
from .checks import DEFAULT_TOL, format_table, run_checks
from .exceptions import (AghfError, BoundaryMismatch, Diverged, ModelError, OutOfDomain,
                         ParseError, ScenarioError, SingularMass, StepUnderflow)
from .files import (load_scenario, read_trajectory, write_convergence, write_rollout,
                    write_trajectory)
from .model import load_model
from .solution import TrajectorySolution, solve
from .verify import rollout, success_check

EXIT_OK, EXIT_FLOW, EXIT_INPUT, EXIT_VERIFY, EXIT_DERIV = 0, 1, 2, 3, 4

_INPUT_ERRORS = (ParseError, ModelError, ScenarioError, BoundaryMismatch, OutOfDomain,
                 OSError, ValueError)


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_inputs(args):
    model = load_model(args.model)
    scenario = load_scenario(args.scenario)
    scenario.validate_against(model)
    return model, scenario


def _resolve_threads(threads):
    if threads < 0:
        raise ValueError("--threads must be >= 0")
    return threads if threads > 0 else (os.cpu_count() or 1)


def cmd_solve(args):
    try:
        model, sc = _load_inputs(args)
        threads = _resolve_threads(args.threads)
    except _INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, exc)
    try:
        sol = solve(model, sc.x0, sc.xf, sc.T, sc.params, sc.planning_obstacles(model), sc.flow,
                    threads=threads, curve=sc.initial_curve)
    except (Diverged, StepUnderflow, SingularMass) as exc:
        return _fail(EXIT_FLOW, f"flow failed: {type(exc).__name__}: {exc}")
    except _INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, exc)
    write_trajectory(args.out, sol.node_times, sol.node_states, sol.node_controls)
    write_convergence(args.log, sol.convergence)
    last = sol.convergence[-1]
    print(f"stop_reason: {sol.stop_reason}")
    print(f"s_end: {last.s:.6g}")
    print(f"action: {last.action:.10e}")
    print(f"control_energy: {last.control_energy:.10e}")
    print(f"rhs_inf_norm: {last.rhs_inf_norm:.3e}")
    print(f"wall_time: {sol.wall_time:.3f} s")
    return EXIT_OK


def cmd_verify(args):
    try:
        model, sc = _load_inputs(args)
        times, states, controls = read_trajectory(args.traj)
        n = model.nv
        if states.shape[1] != 2 * n:
            raise ScenarioError(f"trajectory has {states.shape[1] // 2} joints, model has {n}")
        cheb = ChebGrid(states.shape[0] - 1, sc.T)
        if np.abs(times - cheb.times).max() > 1e-9 * max(1.0, sc.T):
            raise ScenarioError("trajectory times are not the Chebyshev nodes of horizon T")
        sol = TrajectorySolution(times, states, controls)
        result = rollout(model, sol, sc.kp, sc.kv, sc.rollout_dt)
    except Diverged as exc:
        print(f"rollout diverged: {exc}")
        return EXIT_VERIFY
    except _INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, exc)
    report = success_check(result, sc.xf, sc.epsilon, model, sc.obstacle_set(model), sc.check_dt)
    write_rollout(args.out, result)
    print(report.summary())
    print(f"control_energy: {result.control_energy:.10e}")
    return EXIT_OK if report.success else EXIT_VERIFY


def cmd_check_derivs(args):
    try:
        model = load_model(args.model)
        if not args.tol > 0:
            raise ValueError("--tol must be positive")
    except _INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, exc)
    start = time.perf_counter()
    results = run_checks(model, seed=args.seed, points=args.points, tol=args.tol)
    print(format_table(results))
    failed = [r.name for r in results if not r.ok]
    print(f"elapsed: {time.perf_counter() - start:.2f} s")
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_DERIV
    print("all checks passed")
    return EXIT_OK


def bench_model(model, samples, seed=0, k=1e3):
    """Per-call times (seconds) of omega and omega_jacobian at random points."""
    rng = np.random.default_rng(seed)
    n = model.nv
    t_om = np.empty(samples)
    t_jac = np.empty(samples)
    warm = aghf.StatePoint(np.zeros(2 * n), np.zeros(2 * n), np.zeros(2 * n))
    aghf.omega(warm, model, k)              # untimed: first-call overhead
    aghf.omega_jacobian(warm, model, k)
    gc_was_on = gc.isenabled()
    gc.disable()                            # as timeit does
    try:
        for i in range(samples):
            X = np.concatenate((rng.uniform(-np.pi, np.pi, n), rng.normal(size=n)))
            pt = aghf.StatePoint(X, rng.normal(size=2 * n), rng.normal(size=2 * n))
            t0 = time.perf_counter()
            aghf.omega(pt, model, k)
            t1 = time.perf_counter()
            aghf.omega_jacobian(pt, model, k)
            t2 = time.perf_counter()
            t_om[i], t_jac[i] = t1 - t0, t2 - t1
    finally:
        if gc_was_on:
            gc.enable()
    return t_om, t_jac


def cmd_bench(args):
    try:
        model = load_model(args.model)
        if args.samples < 1:
            raise ValueError("--samples must be >= 1")
    except _INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, exc)
    t_om, t_jac = bench_model(model, args.samples, args.seed)
    print(f"model: {model.name} (N={model.nv}), samples: {args.samples}")
    for name, t in (("omega", t_om), ("omega_jacobian", t_jac)):
        us = t * 1e6
        print(f"{name}: {us.mean():.3f} +/- {us.std():.3f} us")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="aghfplan", description="Heat-flow trajectory planner.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="plan a trajectory")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="trajectory CSV")
    p.add_argument("--log", required=True, help="convergence CSV")
    p.add_argument("--threads", type=int, default=1, help="0 = one per CPU")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="closed-loop rollout of a planned trajectory")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", required=True, help="rollout CSV")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check-derivs", help="finite-difference derivative suite")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL,
                   help="first-derivative tolerance; other families scale from it")
    p.add_argument("--points", type=int, default=3)
    p.set_defaults(func=cmd_check_derivs)

    p = sub.add_parser("bench", help="time omega and its Jacobian")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _ArgumentError as exc:
        return _fail(EXIT_INPUT, exc)
    try:
        return args.func(args)
    except AghfError as exc:  # anything not classified above
        return _fail(EXIT_FLOW, exc)


if __name__ == "__main__":
    sys.exit(main())
