"""Command line front end.

Modes:
  solve   integrate the problem, write the trajectory and the per-iteration
          update norms as CSV
  verify  solve, then run the residual / initial-limit / decay checks
          against their thresholds
  study   solve on a dyadic ladder of grids against a closed-form oracle
          and tabulate sup errors and observed orders
  oracle  tabulate the closed-form oracle itself

Oracles: "ml:<lambda>" is the exact solution of the linear problem
D^alpha y = lambda * y with the problem's initial values, namely
sum_j b_j t^j E_(alpha, j+1)(lambda t^alpha); "expr:<text>" is any
expression in t using the package grammar.

Exit codes: 0 success, 1 bad input (file, flags, problem validation),
2 non-convergence or a failed verification threshold.

All floats are written with repr-faithful precision (%.17g), so repeated
runs produce byte-identical files. The study mode solves grids in a thread
pool sized by FRACPICARD_THREADS (default: up to 4).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fractional_ops import Grid, SampledFunction
from .picard_solver import (
    NonFiniteIterateError,
    SolutionTrajectory,
    solve,
)
from .problem_model import (
    MultiTermProblem,
    ProblemValidationError,
    RhsDomainError,
    RhsSyntaxError,
    eval_rhs,
    load_problem,
    parse_rhs,
)
from .special_functions import MLParams, SeriesConvergenceError, mittag_leffler
from .verification import check_equivalence, initial_limit_checks, origin_decay

__all__ = ["RunConfig", "main", "entry"]


class CliInputError(Exception):
    """Unusable invocation or input file; maps to exit code 1."""


@dataclass
class RunConfig:
    """Everything one invocation needs; mirrors the CLI flags."""

    config: str
    mode: str = "solve"
    n_points: int = 256
    grading: float = 1.0
    tol: float = 1e-10
    max_iter: int = 200
    output: str = ""
    oracle: str = ""
    study_min: int = 16
    volterra_tol: float = 1e-3
    ode_tol: float = 1e-2
    ic_tol: float = 5e-2
    limit_tol: float = 5e-2
    slope_tol: float = 0.05
    decay_limit_tol: float = 1e-3
    self_test_corrupt: bool = False


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _output_path(cfg: RunConfig) -> str:
    return cfg.output or f"fracpicard_{cfg.mode}.csv"


def _sibling_path(path: str, suffix: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}{suffix}{ext or '.csv'}"


def _make_grid(problem: MultiTermProblem, n_points: int, grading: float) -> Grid:
    if n_points < 16:
        raise CliInputError(f"--n-points must be at least 16, got {n_points}")
    if grading < 1.0:
        raise CliInputError(f"--grading must be >= 1, got {grading}")
    if grading == 1.0:
        return Grid.uniform(problem.horizon, n_points)
    return Grid.graded(problem.horizon, n_points, grading)


def _load(cfg: RunConfig) -> MultiTermProblem:
    try:
        return load_problem(cfg.config)
    except FileNotFoundError:
        raise CliInputError(f"config file not found: {cfg.config}")
    except json.JSONDecodeError as exc:
        raise CliInputError(f"config is not valid JSON: {exc}")
    except (ProblemValidationError, RhsSyntaxError, ValueError) as exc:
        raise CliInputError(str(exc))


def _oracle_fn(spec_text: str, problem: MultiTermProblem):
    kind, sep, rest = spec_text.partition(":")
    if not sep:
        raise CliInputError("--oracle must look like ml:<lambda> or expr:<text>")
    if kind == "ml":
        try:
            lam = float(rest)
        except ValueError:
            raise CliInputError(f"ml oracle needs a numeric rate, got {rest!r}")
        params = [MLParams(problem.alpha, j + 1.0) for j in range(problem.n)]

        def fn(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            for j, bj in enumerate(problem.initial_values):
                if bj == 0.0:
                    continue
                ml = np.array(
                    [mittag_leffler(params[j], lam * ti**problem.alpha) for ti in t]
                )
                out = out + bj * t**j * ml
            return out

        return fn
    if kind == "expr":
        try:
            expr = parse_rhs(rest, 0)
        except RhsSyntaxError as exc:
            raise CliInputError(f"bad oracle expression: {exc}")

        def fn(t: np.ndarray) -> np.ndarray:
            vals = eval_rhs(expr, np.asarray(t, dtype=float))
            return np.asarray(vals, dtype=float)

        return fn
    raise CliInputError(f"unknown oracle kind {kind!r} (use ml: or expr:)")


def _trajectory_rows(trajectory: SolutionTrajectory):
    grid = trajectory.grid
    n_nodes = grid.nodes.size
    phi = trajectory.phi
    if phi.singular_exponent > 0.0:
        phi_col = np.concatenate(([np.nan], phi.values))
    else:
        phi_col = phi.values
    for i in range(n_nodes):
        row = [grid.nodes[i], trajectory.y.values[i]]
        row.extend(zf.values[i] for zf in trajectory.inner)
        row.append(phi_col[i])
        yield row


def run_solve(cfg: RunConfig) -> int:
    problem = _load(cfg)
    grid = _make_grid(problem, cfg.n_points, cfg.grading)
    trajectory = solve(problem, grid, tol=cfg.tol, max_iter=cfg.max_iter)

    out = _output_path(cfg)
    header = ["t", "y"] + [f"z{h + 1}" for h in range(problem.m)] + ["phi"]
    _write_csv(out, header, _trajectory_rows(trajectory))
    conv_path = _sibling_path(out, "_convergence")
    _write_csv(
        conv_path,
        ["iteration", "delta"],
        ([k + 1, d] for k, d in enumerate(trajectory.report.deltas)),
    )

    report = trajectory.report
    status = "converged" if report.converged else "NOT converged"
    print(
        f"solve: {status} after {report.iterations} iterations "
        f"(final delta {report.deltas[-1]:.3g}, contraction estimate "
        f"{report.contraction_estimate:.3g}); wrote {out} and {conv_path}"
    )
    return 0 if report.converged else 2


def _verify_checks(cfg: RunConfig, problem: MultiTermProblem, trajectory: SolutionTrajectory):
    checks = []
    report = trajectory.report
    final_delta = report.deltas[-1] if report.deltas else float("inf")
    checks.append(("converged", final_delta, cfg.tol, report.converged))

    residuals = check_equivalence(trajectory, problem)
    checks.append(("volterra_residual", residuals.volterra_residual, cfg.volterra_tol, None))
    checks.append(("ode_residual", residuals.ode_residual, cfg.ode_tol, None))
    for k, err in enumerate(residuals.ic_errors):
        tol_k = cfg.ic_tol * (1.0 + abs(problem.initial_values[k]))
        checks.append((f"ic_error_{k}", err, tol_k, None))

    limits = initial_limit_checks(problem, trajectory)
    for k, mag in enumerate(limits.integral_limits):
        checks.append((f"initial_limit_{k}", mag, cfg.limit_tol, None))

    decay = origin_decay(problem.gamma, problem.alpha, trajectory.grid)
    slope_err = abs(decay.slope - (problem.alpha - problem.gamma))
    checks.append(("decay_slope_error", slope_err, cfg.slope_tol, None))
    checks.append(("decay_limit", abs(decay.limit_estimate), cfg.decay_limit_tol, None))

    resolved = []
    for name, value, threshold, passed in checks:
        if passed is None:
            passed = value <= threshold
        resolved.append((name, float(value), float(threshold), bool(passed)))
    return resolved


def run_verify(cfg: RunConfig) -> int:
    problem = _load(cfg)
    grid = _make_grid(problem, cfg.n_points, cfg.grading)
    trajectory = solve(problem, grid, tol=cfg.tol, max_iter=cfg.max_iter)
    if cfg.self_test_corrupt:
        corrupted = SampledFunction(trajectory.grid, trajectory.y.values * 1.1, 0.0)
        trajectory = dataclasses.replace(trajectory, y=corrupted)
        print("self test: trajectory deliberately corrupted (y scaled by 1.1)")

    checks = _verify_checks(cfg, problem, trajectory)
    out = _output_path(cfg)
    _write_csv(
        out,
        ["check", "value", "threshold", "passed"],
        ([name, value, threshold, "1" if ok else "0"] for name, value, threshold, ok in checks),
    )
    n_pass = sum(1 for c in checks if c[3])
    for name, value, threshold, ok in checks:
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {value:.6g} (threshold {threshold:.6g})")
    print(f"verify: {n_pass}/{len(checks)} checks passed; wrote {out}")
    return 0 if n_pass == len(checks) else 2


def _thread_cap(n_tasks: int) -> int:
    env = os.environ.get("FRACPICARD_THREADS", "")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise CliInputError(f"FRACPICARD_THREADS must be an integer, got {env!r}")
        if cap < 1:
            raise CliInputError("FRACPICARD_THREADS must be >= 1")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def run_study(cfg: RunConfig) -> int:
    problem = _load(cfg)
    if not cfg.oracle:
        raise CliInputError("study mode needs --oracle")
    oracle = _oracle_fn(cfg.oracle, problem)
    if cfg.study_min < 16:
        raise CliInputError(f"--study-min must be at least 16, got {cfg.study_min}")
    sizes = [cfg.study_min]
    while sizes[-1] * 2 <= cfg.n_points:
        sizes.append(sizes[-1] * 2)
    if sizes[-1] != cfg.n_points:
        raise CliInputError(
            f"--n-points must be --study-min times a power of two, got {cfg.n_points}"
        )

    def one(n: int):
        grid = _make_grid(problem, n, cfg.grading)
        trajectory = solve(problem, grid, tol=cfg.tol, max_iter=cfg.max_iter)
        exact = oracle(grid.nodes)
        err = float(np.max(np.abs(trajectory.y.values - exact)))
        return err, trajectory.report.iterations, trajectory.report.converged

    with ThreadPoolExecutor(max_workers=_thread_cap(len(sizes))) as pool:
        results = list(pool.map(one, sizes))

    rows = []
    all_converged = True
    for i, (n, (err, iters, conv)) in enumerate(zip(sizes, results)):
        if i + 1 < len(sizes) and results[i + 1][0] > 0.0 and err > 0.0:
            order = float(np.log2(err / results[i + 1][0]))
        else:
            order = float("nan")
        rows.append([n, err, order, iters])
        all_converged = all_converged and conv
    out = _output_path(cfg)
    _write_csv(out, ["n_intervals", "sup_error", "observed_order", "iterations"], rows)
    for n, err, order, iters in rows:
        print(f"N = {n:6d}  sup error {err:.6e}  order {order:7.3f}  iterations {iters}")
    print(f"study: wrote {out}")
    return 0 if all_converged else 2


def run_oracle(cfg: RunConfig) -> int:
    problem = _load(cfg)
    if not cfg.oracle:
        raise CliInputError("oracle mode needs --oracle")
    oracle = _oracle_fn(cfg.oracle, problem)
    grid = _make_grid(problem, cfg.n_points, cfg.grading)
    vals = oracle(grid.nodes)
    out = _output_path(cfg)
    _write_csv(out, ["t", "y"], ([t, v] for t, v in zip(grid.nodes, vals)))
    print(f"oracle: wrote {out}")
    return 0


_DISPATCH = {
    "solve": run_solve,
    "verify": run_verify,
    "study": run_study,
    "oracle": run_oracle,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # keep exit code 2 reserved for non-convergence
        raise CliInputError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracpicard", description=__doc__ and __doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="problem description (JSON)")
    p.add_argument(
        "--mode", choices=sorted(_DISPATCH), default="solve", help="what to run"
    )
    p.add_argument("--n-points", type=int, default=256, dest="n_points",
                   help="number of grid intervals (default 256)")
    p.add_argument("--grading", type=float, default=1.0,
                   help="mesh grading exponent, 1 = uniform (default 1)")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="iteration stopping tolerance (default 1e-10)")
    p.add_argument("--max-iter", type=int, default=200, dest="max_iter",
                   help="iteration budget (default 200)")
    p.add_argument("--output", default="", help="output CSV path")
    p.add_argument("--oracle", default="",
                   help="closed form oracle, ml:<lambda> or expr:<text>")
    p.add_argument("--study-min", type=int, default=16, dest="study_min",
                   help="smallest grid in study mode (default 16)")
    p.add_argument("--volterra-tol", type=float, default=1e-3, dest="volterra_tol",
                   help="verify: integral-form residual threshold (default 1e-3)")
    p.add_argument("--ode-tol", type=float, default=1e-2, dest="ode_tol",
                   help="verify: differential-form residual threshold (default 1e-2)")
    p.add_argument("--ic-tol", type=float, default=5e-2, dest="ic_tol",
                   help="verify: initial-condition recovery threshold, scaled by 1+|b_k| (default 5e-2)")
    p.add_argument("--limit-tol", type=float, default=5e-2, dest="limit_tol",
                   help="verify: first-node bound on I^(alpha-k) phi (default 5e-2)")
    p.add_argument("--slope-tol", type=float, default=0.05, dest="slope_tol",
                   help="verify: allowed deviation of the decay slope (default 0.05)")
    p.add_argument("--decay-limit-tol", type=float, default=1e-3, dest="decay_limit_tol",
                   help="verify: bound on the extrapolated t->0 decay limit (default 1e-3)")
    p.add_argument("--self-test-corrupt", action="store_true", dest="self_test_corrupt",
                   help="verify: corrupt the trajectory first (the checks must then fail)")
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = RunConfig(**vars(args))
        return _DISPATCH[cfg.mode](cfg)
    except CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProblemValidationError, RhsSyntaxError, RhsDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteIterateError, SeriesConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
