"""Discrete fractional integrals and Caputo derivatives on one-sided grids.

The fractional integral I^beta is discretized by product trapezoidal
quadrature: on each mesh cell the regular factor is replaced by its linear
interpolant and the moments of the kernel (t_n - tau)^(beta-1) are computed
in closed form, so the rule is exact (to round-off) on functions that are
piecewise linear over the grid. The moment formulas are written in
difference form (expm1/log1p plus a series branch) because the naive
power-difference form loses eps*(t_n/h) relative digits and cannot hold the
1e-13 exactness this package promises.

Inputs carrying a power singularity t^(-g) at the origin are handled by
applying the same construction to the bounded factor t^g f(t) against the
weight (t_n - tau)^(beta-1) tau^(-g); the cell moments of that weight are
incomplete beta functions, evaluated by an in-house series. The weighted
rule is exact on t^(-g) times piecewise-linear inputs, which is what makes
small-t decay studies of I^beta t^(-g) meaningful at all.

Uniform grids store the quadrature as an O(N) convolution stencil applied
with numpy's convolve; graded grids fall back to a dense lower-triangular
table. Weighted tables are always dense and cached per exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special_functions import gamma

__all__ = [
    "Grid",
    "SampledFunction",
    "FracIntegralOperator",
    "build_integral_operator",
    "apply_integral",
    "integral_node_values",
    "caputo_derivative",
    "weighted_norm",
    "ceil_order",
    "polynomial_from_derivatives",
]

_INTEGER_SNAP = 1e-9


def ceil_order(alpha: float) -> int:
    """Number of initial conditions attached to a derivative of order alpha:
    the smallest integer n with n - 1 < alpha <= n (so n = alpha when alpha
    is a positive integer)."""
    if not alpha > 0.0:
        raise ValueError(f"order must be positive, got {alpha}")
    if abs(alpha - round(alpha)) < _INTEGER_SNAP:
        return int(round(alpha))
    return int(math.ceil(alpha))


def is_integer_order(alpha: float) -> bool:
    """True when alpha is (numerically) a positive integer."""
    return alpha > 0.0 and abs(alpha - round(alpha)) < _INTEGER_SNAP


@dataclass(frozen=True)
class Grid:
    """Graded one-sided mesh t_i = T (i/N)^grading, i = 0..N.

    grading = 1 is the uniform mesh. Grading > 1 clusters nodes near the
    origin, which is where solutions of fractional problems lose
    smoothness.
    """

    nodes: np.ndarray
    grading: float = 1.0

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("grid needs at least 3 nodes in a 1-d array")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if not self.grading >= 1.0:
            raise ValueError(f"grading must be >= 1, got {self.grading}")
        n = nodes.size - 1
        expected = nodes[-1] * (np.arange(n + 1) / n) ** self.grading
        if not np.allclose(nodes, expected, rtol=0.0, atol=1e-12 * max(nodes[-1], 1.0)):
            raise ValueError("nodes do not follow t_i = T (i/N)^grading")

    @classmethod
    def uniform(cls, horizon: float, n_intervals: int) -> "Grid":
        if not horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        if n_intervals < 2:
            raise ValueError("need at least 2 intervals")
        nodes = horizon * (np.arange(n_intervals + 1) / n_intervals)
        return cls(nodes, 1.0)

    @classmethod
    def graded(cls, horizon: float, n_intervals: int, grading: float) -> "Grid":
        if not horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        if n_intervals < 2:
            raise ValueError("need at least 2 intervals")
        nodes = horizon * (np.arange(n_intervals + 1) / n_intervals) ** grading
        return cls(nodes, grading)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def is_uniform(self) -> bool:
        return self.grading == 1.0

    def matches(self, other: "Grid") -> bool:
        return self is other or (
            self.nodes.size == other.nodes.size
            and bool(np.array_equal(self.nodes, other.nodes))
        )


@dataclass(frozen=True)
class SampledFunction:
    """Node samples of a function on a Grid.

    singular_exponent g in [0, 1) declares that the function behaves like
    t^(-g) near the origin; for g > 0 the value at t_0 = 0 does not exist
    and samples start at t_1 (values has length N instead of N + 1).
    """

    grid: Grid
    values: np.ndarray
    singular_exponent: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        g = self.singular_exponent
        if not (0.0 <= g < 1.0):
            raise ValueError(
                f"singular exponent must lie in [0, 1), got {g} (g >= 1 is not integrable)"
            )
        expected = self.grid.nodes.size - (1 if g > 0.0 else 0)
        if values.ndim != 1 or values.size != expected:
            raise ValueError(
                f"expected {expected} samples for this grid, got shape {values.shape}"
            )

    @property
    def sample_times(self) -> np.ndarray:
        if self.singular_exponent > 0.0:
            return self.grid.nodes[1:]
        return self.grid.nodes

    @classmethod
    def from_callable(cls, grid: Grid, fn, singular_exponent: float = 0.0) -> "SampledFunction":
        t = grid.nodes[1:] if singular_exponent > 0.0 else grid.nodes
        vals = np.asarray(fn(t), dtype=float)
        if vals.ndim == 0:
            vals = np.full(t.shape, float(vals))
        return cls(grid, vals, singular_exponent)

    def _check_compatible(self, other: "SampledFunction") -> None:
        if not self.grid.matches(other.grid):
            raise ValueError("sampled functions live on different grids")
        if self.singular_exponent != other.singular_exponent:
            raise ValueError("sampled functions carry different singular exponents")

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        self._check_compatible(other)
        return SampledFunction(self.grid, self.values + other.values, self.singular_exponent)

    def __sub__(self, other: "SampledFunction") -> "SampledFunction":
        self._check_compatible(other)
        return SampledFunction(self.grid, self.values - other.values, self.singular_exponent)


def _kernel_moments(a: np.ndarray, b: np.ndarray, beta: float):
    """Exact moments of the kernel u^(beta-1) over [b, a], 0 <= b < a:

        M0 = integral u^(beta-1) du         = (a^beta - b^beta) / beta
        M1 = integral u^(beta-1) (a - u) du

    evaluated in difference form so that M0, M1 keep full relative
    precision even when a - b << a. The gamma(beta) normalization is NOT
    included here.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = a - b
    m0 = np.empty_like(a)
    m1 = np.empty_like(a)

    zero = b <= 0.0
    if np.any(zero):
        az = a[zero]
        m0[zero] = az**beta / beta
        m1[zero] = az ** (beta + 1.0) / (beta * (beta + 1.0))

    nz = ~zero
    if np.any(nz):
        an, bn, hn = a[nz], b[nz], h[nz]
        # d1 = a^beta - b^beta without cancellation
        d1 = -(an**beta) * np.expm1(beta * np.log1p(-hn / an))
        m0[nz] = d1 / beta

        m1n = np.empty_like(an)
        r = hn / bn
        ser = r <= 0.5
        if np.any(~ser):
            d2 = -(an ** (beta + 1.0)) * np.expm1((beta + 1.0) * np.log1p(-hn / an))
            m1n[~ser] = an[~ser] * d1[~ser] / beta - d2[~ser] / (beta + 1.0)
        if np.any(ser):
            # M1 = h^2 b^(beta-1) sum_j C(beta-1, j) r^j / ((j+1)(j+2))
            rs = r[ser]
            acc = np.zeros_like(rs)
            c = 1.0
            rp = np.ones_like(rs)
            for j in range(60):
                acc += c * rp / ((j + 1.0) * (j + 2.0))
                c *= (beta - 1.0 - j) / (j + 1.0)
                rp *= rs
            m1n[ser] = hn[ser] ** 2 * bn[ser] ** (beta - 1.0) * acc
        m1[nz] = m1n

    return m0, m1


def _inc_beta_series(p: float, q: float, x: np.ndarray) -> np.ndarray:
    # B_x(p, q) = sum_k [(1-q)_k / k!] x^(p+k) / (p+k), convergent part x <= 1/2
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    coef = 1.0
    xp = np.where(x > 0.0, x, 1.0) ** p
    xp = np.where(x > 0.0, xp, 0.0)
    for k in range(80):
        acc += coef * xp / (p + k)
        coef *= (k + 1.0 - q) / (k + 1.0)
        xp = xp * x
    return acc


def _beta_complete(p: float, q: float) -> float:
    return gamma(p) * gamma(q) / gamma(p + q)


def incomplete_beta(p: float, q: float, x) -> np.ndarray:
    """Lower incomplete beta B_x(p, q) = integral_0^x u^(p-1)(1-u)^(q-1) du
    for p, q > 0 and x in [0, 1], by series for x <= 1/2 and the symmetry
    B_x(p, q) = B(p, q) - B_(1-x)(q, p) otherwise."""
    if p <= 0.0 or q <= 0.0:
        raise ValueError(f"incomplete beta needs positive parameters, got ({p}, {q})")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("incomplete beta argument must lie in [0, 1]")
    out = np.empty_like(x)
    lo = x <= 0.5
    if np.any(lo):
        out[lo] = _inc_beta_series(p, q, x[lo])
    hi = ~lo
    if np.any(hi):
        out[hi] = _beta_complete(p, q) - _inc_beta_series(q, p, 1.0 - x[hi])
    return out


class FracIntegralOperator:
    """Product-trapezoidal discretization of the fractional integral

        (I^beta f)(t_n) = 1/gamma(beta) * integral_0^t_n (t_n - tau)^(beta-1) f(tau) dtau

    on a fixed Grid. On uniform grids the weights collapse to a length-N
    convolution stencil plus a boundary column; graded grids hold the full
    lower-triangular table. Weighted tables for singular inputs are built
    lazily per exponent and cached on the operator.
    """

    def __init__(self, order: float, grid: Grid) -> None:
        if not order > 0.0:
            raise ValueError(f"integral order must be positive, got {order}")
        self.order = float(order)
        self.grid = grid
        self._weighted_tables: dict[float, np.ndarray] = {}
        t = grid.nodes
        n = grid.n_intervals
        ginv = 1.0 / gamma(self.order)
        if grid.is_uniform:
            h = t[1] - t[0]
            k = np.arange(1, n + 1, dtype=float)
            m0, m1 = _kernel_moments(k * h, (k - 1.0) * h, self.order)
            left = (m0 - m1 / h) * ginv   # weight of f at the cell's far end
            right = (m1 / h) * ginv       # weight of f at the cell's near end
            stencil = np.empty(n)
            stencil[0] = right[0]
            stencil[1:] = left[:-1] + right[1:]
            boundary = np.concatenate(([0.0], left))
            self._stencil = stencil
            self._boundary = boundary
            self._table = None
        else:
            table = np.zeros((n + 1, n + 1))
            for row in range(1, n + 1):
                a = t[row] - t[:row]
                b = t[row] - t[1 : row + 1]
                h = a - b
                m0, m1 = _kernel_moments(a, b, self.order)
                wl = (m0 - m1 / h) * ginv
                wr = (m1 / h) * ginv
                table[row, :row] += wl
                table[row, 1 : row + 1] += wr
            self._stencil = None
            self._boundary = None
            self._table = table

    @property
    def weights(self) -> np.ndarray:
        """Dense lower-triangular weight table w[n, j] (row n = node t_n)."""
        if self._table is not None:
            return self._table
        n = self.grid.n_intervals
        table = np.zeros((n + 1, n + 1))
        for row in range(1, n + 1):
            table[row, 0] = self._boundary[row]
            table[row, 1 : row + 1] = self._stencil[:row][::-1]
        return table

    def _apply_regular(self, u: np.ndarray) -> np.ndarray:
        n = self.grid.n_intervals
        out = np.empty(n + 1)
        out[0] = 0.0
        if self._table is not None:
            out[1:] = (self._table @ u)[1:]
        else:
            out[1:] = np.convolve(self._stencil, u[1:])[:n] + self._boundary[1:] * u[0]
        return out

    def _weighted_table(self, g: float) -> np.ndarray:
        """Table acting on samples of the bounded factor t^g f(t) (column 0
        multiplies the extrapolated value at t_0). Exact on inputs whose
        bounded factor is piecewise linear."""
        key = round(g, 15)
        cached = self._weighted_tables.get(key)
        if cached is not None:
            return cached
        beta = self.order
        t = self.grid.nodes
        n = self.grid.n_intervals
        hcells = np.diff(t)[None, :]
        table = np.zeros((n, n + 1))
        ginv = 1.0 / gamma(beta)
        # cell moments against (t_row - tau)^(beta-1) tau^(-g):
        #   J0_j = integral_(t_j)^(t_j+1) ...            = t_row^(beta-g) diff B_x(1-g, beta)
        #   J1_j = integral ... (tau - 0) tau-weighted   = t_row^(beta-g+1) diff B_x(2-g, beta)
        # with x_j = t_j / t_row; linear interpolation of the bounded factor
        # then gives endpoint weights wl = J0 - S/h, wr = S/h, S = J1 - t_j J0.
        block = max(1, 2_000_000 // (n + 1))
        for start in range(1, n + 1, block):
            rows = np.arange(start, min(start + block, n + 1))
            tr = t[rows][:, None]
            x = np.clip(t[None, :] / tr, 0.0, 1.0)
            b0 = incomplete_beta(1.0 - g, beta, x)
            b1 = incomplete_beta(2.0 - g, beta, x)
            j0 = tr ** (beta - g) * np.diff(b0, axis=1)
            j1 = tr ** (beta - g + 1.0) * np.diff(b1, axis=1)
            s = j1 - t[None, :-1] * j0
            wl = j0 - s / hcells
            wr = s / hcells
            live = np.arange(n)[None, :] < rows[:, None]
            wl = np.where(live, wl, 0.0)
            wr = np.where(live, wr, 0.0)
            rowblock = np.zeros((rows.size, n + 1))
            rowblock[:, :-1] += wl
            rowblock[:, 1:] += wr
            table[rows - 1] = rowblock * ginv
        self._weighted_tables[key] = table
        return table

    def apply(self, f: SampledFunction) -> SampledFunction:
        return apply_integral(self, f)


def build_integral_operator(order: float, grid: Grid) -> FracIntegralOperator:
    """Assemble the discrete I^order on the given grid."""
    return FracIntegralOperator(order, grid)


def integral_node_values(op: FracIntegralOperator, f: SampledFunction) -> np.ndarray:
    """Values of (I^op.order f) at the positive nodes t_1..t_N only.

    Unlike apply_integral this makes no continuity claim at the origin, so
    it stays usable in the boundary case order <= singular_exponent where
    the image is not continuous at 0 (decay studies need exactly that).
    """
    if not op.grid.matches(f.grid):
        raise ValueError("operator and samples live on different grids")
    g = f.singular_exponent
    if g == 0.0:
        return op._apply_regular(f.values)[1:]
    t = op.grid.nodes
    bounded = t[1:] ** g * f.values
    # the bounded factor is extrapolated linearly to t_0 from its first two samples
    g0 = bounded[0] - (bounded[1] - bounded[0]) * t[1] / (t[2] - t[1])
    gvec = np.concatenate(([g0], bounded))
    return op._weighted_table(g) @ gvec


def apply_integral(op: FracIntegralOperator, f: SampledFunction) -> SampledFunction:
    """Discrete fractional integral of f; the image is continuous with
    value 0 at t = 0, which requires order > singular_exponent."""
    if not op.grid.matches(f.grid):
        raise ValueError("operator and samples live on different grids")
    g = f.singular_exponent
    if g == 0.0:
        return SampledFunction(op.grid, op._apply_regular(f.values), 0.0)
    if op.order <= g:
        raise ValueError(
            f"integral order {op.order} must exceed the singular exponent {g} "
            "for a continuous image; use integral_node_values for the boundary case"
        )
    vals = integral_node_values(op, f)
    return SampledFunction(op.grid, np.concatenate(([0.0], vals)), 0.0)


def polynomial_from_derivatives(coeffs, t) -> np.ndarray:
    """Samples of sum_j coeffs[j] t^j / j!, the polynomial with prescribed
    derivatives coeffs[j] at t = 0. Accumulation order is fixed so that two
    calls sharing a coefficient prefix agree bitwise on that prefix."""
    t = np.asarray(t, dtype=float)
    vals = np.zeros_like(t)
    fact = 1.0
    for j, cj in enumerate(coeffs):
        if j > 0:
            fact *= j
        vals = vals + (cj / fact) * t**j
    return vals


def caputo_derivative(y: SampledFunction, alpha: float, initial_derivs) -> SampledFunction:
    """Discrete Caputo derivative of order alpha > 0:

        D^alpha y = d^n/dt^n [ I^(n-alpha) (y - T_(n-1) y) ],  n = ceil(alpha),

    where T_(n-1) is the degree n-1 Taylor polynomial encoded by
    initial_derivs (length n). Differencing uses centered second-order
    stencils, so this is a diagnostic tool, not part of the solve loop.
    """
    if y.singular_exponent != 0.0:
        raise ValueError("caputo_derivative needs regular samples")
    n = ceil_order(alpha)
    initial_derivs = tuple(float(b) for b in initial_derivs)
    if len(initial_derivs) != n:
        raise ValueError(
            f"order {alpha} needs exactly {n} initial derivatives, got {len(initial_derivs)}"
        )
    grid = y.grid
    if grid.n_intervals < 2 * n:
        raise ValueError(
            f"grid too coarse to difference {n} times: N = {grid.n_intervals} < {2 * n}"
        )
    t = grid.nodes
    r = y.values - polynomial_from_derivatives(initial_derivs, t)
    if is_integer_order(alpha):
        w = r
    else:
        op = build_integral_operator(n - alpha, grid)
        w = op._apply_regular(r)
    for _ in range(n):
        w = np.gradient(w, t, edge_order=2)
    return SampledFunction(grid, w, 0.0)


def weighted_norm(f: SampledFunction, g: float) -> float:
    """sup over sample nodes of |t^g f(t)|, the norm of the weighted space
    C_g in which the fixed-point iteration contracts."""
    if not (0.0 <= g < 1.0):
        raise ValueError(f"weight exponent must lie in [0, 1), got {g}")
    if g < f.singular_exponent:
        raise ValueError(
            f"weight exponent {g} too small for samples with singular exponent "
            f"{f.singular_exponent}"
        )
    t = f.sample_times
    return float(np.max(np.abs(t**g * f.values)))
