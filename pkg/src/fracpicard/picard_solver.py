"""Successive-approximation solver for multi-term problems.

The problem is first rewritten in integral form. With phi = D^alpha y the
equation turns into a fixed-point problem for phi alone:

    z_h = I^(alpha - alpha_h) phi + sum_(j >= n_h) b_j t^(j - alpha_h) / gamma(j + 1 - alpha_h)
    phi <- f(t, z_1, ..., z_m),

where n_h = ceil(alpha_h). Every step therefore applies smoothing
fractional integrals to the current iterate; no numerical differentiation
appears anywhere in the loop. The solution is reconstructed at the end as
y = sum_j b_j t^j / j! + I^alpha phi.

The iteration contracts in the weighted norm sup |t^gamma (.)| whenever
omega = L * sum_h T^(alpha - alpha_h) / gamma(alpha - alpha_h + 1) < 1 for
a Lipschitz constant L of f in z. The solver keeps iterating even when its
empirical omega estimate is >= 1 (a ContractionWarning is emitted): on a
finite horizon the Volterra structure still forces convergence, just
without the a priori geometric rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fractional_ops import (
    FracIntegralOperator,
    Grid,
    SampledFunction,
    apply_integral,
    build_integral_operator,
    ceil_order,
    polynomial_from_derivatives,
    weighted_norm,
)
from .problem_model import (
    MultiTermProblem,
    eval_rhs,
    estimate_lipschitz,
    validate_problem,
)
from .special_functions import gamma

__all__ = [
    "ContractionWarning",
    "NonFiniteIterateError",
    "PicardState",
    "OperatorSet",
    "ConvergenceReport",
    "SolutionTrajectory",
    "taylor_part",
    "derivative_taylor_part",
    "build_operator_set",
    "initial_state",
    "picard_step",
    "estimate_contraction",
    "solve",
]


class ContractionWarning(UserWarning):
    """The estimated contraction factor is >= 1; convergence is not
    geometric and may be slow."""


class NonFiniteIterateError(RuntimeError):
    """An iterate left the finite range (overflow in the right-hand side)."""


@dataclass(frozen=True)
class PicardState:
    """One iterate: phi approximates D^alpha y, z the inner derivatives
    consistent with phi (phi = f(t, z)), delta the weighted distance to the
    previous iterate (inf before the first update)."""

    iteration: int
    phi: SampledFunction
    z: tuple
    delta: float


@dataclass(frozen=True)
class OperatorSet:
    """Prebuilt integral operators for one problem/grid pair: outer is
    I^alpha, inner[h] is I^(alpha - alpha_h)."""

    outer: FracIntegralOperator
    inner: tuple


@dataclass(frozen=True)
class ConvergenceReport:
    deltas: tuple
    converged: bool
    iterations: int
    tolerance: float
    lipschitz_estimate: float
    contraction_estimate: float


@dataclass(frozen=True)
class SolutionTrajectory:
    """Solver output: y on the grid, the inner derivatives z, the final
    iterate phi (approximating D^alpha y, possibly singular at 0), and the
    convergence report."""

    grid: Grid
    y: SampledFunction
    inner: tuple
    phi: SampledFunction
    report: ConvergenceReport


def taylor_part(initial_values, grid: Grid) -> SampledFunction:
    """The polynomial sum_j b_j t^j / j! carrying the initial data."""
    vals = polynomial_from_derivatives(initial_values, grid.nodes)
    return SampledFunction(grid, vals, 0.0)


def derivative_taylor_part(initial_values, alpha_h: float, grid: Grid) -> SampledFunction:
    """Caputo derivative of order alpha_h of the initial polynomial:

        sum_(j = n_h)^(n-1) b_j t^(j - alpha_h) / gamma(j + 1 - alpha_h),

    with n_h = ceil(alpha_h); the first n_h terms are annihilated. For
    alpha_h = 0 this is the polynomial itself (same accumulation, so the
    samples agree bitwise with taylor_part)."""
    if alpha_h < 0.0:
        raise ValueError(f"derivative order must be >= 0, got {alpha_h}")
    t = grid.nodes
    if alpha_h == 0.0:
        return SampledFunction(grid, polynomial_from_derivatives(initial_values, t), 0.0)
    n_h = ceil_order(alpha_h)
    vals = np.zeros_like(t)
    for j in range(n_h, len(initial_values)):
        bj = float(initial_values[j])
        vals = vals + (bj / gamma(j + 1.0 - alpha_h)) * t ** (j - alpha_h)
    return SampledFunction(grid, vals, 0.0)


def build_operator_set(problem: MultiTermProblem, grid: Grid) -> OperatorSet:
    """Assemble I^alpha and the I^(alpha - alpha_h), sharing operators
    between coincident orders."""
    cache: dict = {}

    def get(order: float) -> FracIntegralOperator:
        key = round(order, 15)
        if key not in cache:
            cache[key] = build_integral_operator(order, grid)
        return cache[key]

    outer = get(problem.alpha)
    inner = tuple(get(problem.alpha - a) for a in problem.derivative_orders)
    for op, a in zip(inner, problem.derivative_orders):
        if op.order <= problem.gamma:
            raise ValueError(
                f"inner derivative of order {a} would be singular: "
                f"alpha - alpha_h = {op.order:g} must exceed gamma = {problem.gamma:g}"
            )
    return OperatorSet(outer=outer, inner=inner)


def _rhs_samples(problem: MultiTermProblem, grid: Grid, z_funcs) -> SampledFunction:
    """Evaluate f(t, z) on the grid, skipping t_0 when the iterate space is
    weighted (gamma > 0, where f may blow up at the origin)."""
    singular = problem.gamma > 0.0
    t = grid.nodes[1:] if singular else grid.nodes
    zv = [(zf.values[1:] if singular else zf.values) for zf in z_funcs]
    vals = eval_rhs(problem.rhs, t, zv)
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = ~np.isfinite(vals)
        t_bad = float(t[np.argmax(bad)])
        raise NonFiniteIterateError(
            f"right-hand side produced a non-finite value at t = {t_bad:g}"
        )
    return SampledFunction(grid, vals, problem.gamma)


def _taylor_terms(problem: MultiTermProblem, grid: Grid):
    return tuple(
        derivative_taylor_part(problem.initial_values, a, grid)
        for a in problem.derivative_orders
    )


def initial_state(problem: MultiTermProblem, grid: Grid) -> PicardState:
    """Start from the initial polynomial: z^0 holds its fractional
    derivatives and phi^0 = f(t, z^0)."""
    z0 = _taylor_terms(problem, grid)
    phi0 = _rhs_samples(problem, grid, z0)
    return PicardState(iteration=0, phi=phi0, z=z0, delta=np.inf)


def picard_step(
    state: PicardState,
    problem: MultiTermProblem,
    operators: OperatorSet,
    taylor_terms=None,
) -> PicardState:
    """One fixed-point update phi -> f(t, I^(alpha-alpha_h) phi + ...).

    taylor_terms may pass the precomputed derivative_taylor_part samples;
    they are recomputed when omitted."""
    grid = operators.outer.grid
    if taylor_terms is None:
        taylor_terms = _taylor_terms(problem, grid)
    z_new = tuple(
        apply_integral(op, state.phi) + tp
        for op, tp in zip(operators.inner, taylor_terms)
    )
    phi_new = _rhs_samples(problem, grid, z_new)
    delta = weighted_norm(phi_new - state.phi, problem.gamma)
    return PicardState(
        iteration=state.iteration + 1, phi=phi_new, z=z_new, delta=float(delta)
    )


def estimate_contraction(lipschitz: float, problem: MultiTermProblem, horizon=None) -> float:
    """A priori contraction factor of one update in the weighted norm:

        omega = L * sum_h T^(alpha - alpha_h) / gamma(alpha - alpha_h + 1).

    omega < 1 guarantees geometric convergence with ratio omega."""
    t_end = problem.horizon if horizon is None else float(horizon)
    total = 0.0
    for a in problem.derivative_orders:
        mu = problem.alpha - a
        total += t_end**mu / gamma(mu + 1.0)
    return float(lipschitz) * total


def _observed_lipschitz(problem: MultiTermProblem, grid: Grid, z_funcs) -> float:
    """Empirical Lipschitz constant of the right-hand side over the box the
    iterates actually visited (widened 10 percent)."""
    if problem.m == 0:
        return 0.0
    box = []
    for zf in z_funcs:
        lo = float(np.min(zf.values))
        hi = float(np.max(zf.values))
        pad = 0.1 * (hi - lo) + 1e-6
        box.append((lo - pad, hi + pad))
    t_lo = float(grid.nodes[1]) if problem.gamma > 0.0 else 0.0
    return estimate_lipschitz(problem.rhs, (t_lo, grid.horizon), box, seed=0)


def solve(
    problem: MultiTermProblem,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> SolutionTrajectory:
    """Iterate picard_step until the weighted update norm drops to tol or
    max_iter is exhausted; reconstruct y = taylor part + I^alpha phi.

    A non-contractive setup only warns (ContractionWarning); an exhausted
    iteration budget returns a trajectory whose report has converged False.
    """
    validate_problem(problem)
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if abs(grid.horizon - problem.horizon) > 1e-12 * max(problem.horizon, 1.0):
        raise ValueError(
            f"grid horizon {grid.horizon:g} does not match problem horizon "
            f"{problem.horizon:g}"
        )
    operators = build_operator_set(problem, grid)
    taylor_terms = _taylor_terms(problem, grid)

    state = initial_state(problem, grid)
    deltas = []
    converged = False
    for _ in range(max_iter):
        state = picard_step(state, problem, operators, taylor_terms)
        deltas.append(state.delta)
        if state.delta <= tol:
            converged = True
            break

    phi = state.phi
    z_final = tuple(
        apply_integral(op, phi) + tp
        for op, tp in zip(operators.inner, taylor_terms)
    )
    y = taylor_part(problem.initial_values, grid) + apply_integral(operators.outer, phi)

    try:
        lipschitz = _observed_lipschitz(problem, grid, z_final)
    except ArithmeticError:
        lipschitz = float("nan")
    omega = estimate_contraction(lipschitz, problem)
    if omega >= 1.0:
        warnings.warn(
            f"estimated contraction factor {omega:.3g} >= 1; convergence may be slow",
            ContractionWarning,
            stacklevel=2,
        )

    report = ConvergenceReport(
        deltas=tuple(deltas),
        converged=converged,
        iterations=state.iteration,
        tolerance=tol,
        lipschitz_estimate=lipschitz,
        contraction_estimate=omega,
    )
    return SolutionTrajectory(grid=grid, y=y, inner=z_final, phi=phi, report=report)
