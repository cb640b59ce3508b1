"""Quadrature and derivative tests against independent oracles.

Oracles used here:
- the power rule I^beta t^mu = gamma(mu+1)/gamma(mu+1+beta) t^(mu+beta)
  (math.gamma only),
- mpmath 40-digit per-cell closed forms for the product-trapezoid rule on
  arbitrary node values,
- scipy.special.betainc for the in-house incomplete beta,
- classical uniform-grid weight formulas built from second differences of
  (k)^(beta+1) (accurate enough at small N to serve as a cross-check).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracpicard.fractional_ops import (
    FracIntegralOperator,
    Grid,
    SampledFunction,
    apply_integral,
    build_integral_operator,
    caputo_derivative,
    ceil_order,
    incomplete_beta,
    integral_node_values,
    is_integer_order,
    polynomial_from_derivatives,
    weighted_norm,
)

BETAS = (0.3, 0.5, 1.0, 1.7, 2.5)


def power_rule(beta: float, mu: float, t: np.ndarray) -> np.ndarray:
    """I^beta t^mu in closed form."""
    return math.gamma(mu + 1.0) / math.gamma(mu + 1.0 + beta) * t ** (mu + beta)


class TestCeilOrder:
    def test_values(self):
        assert ceil_order(0.5) == 1
        assert ceil_order(1.0) == 1
        assert ceil_order(1.5) == 2
        assert ceil_order(2.0) == 2
        assert ceil_order(2.0 + 1e-12) == 2  # snaps to the integer
        assert ceil_order(2.5) == 3

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ceil_order(0.0)
        with pytest.raises(ValueError):
            ceil_order(-1.5)

    def test_integer_detection(self):
        assert is_integer_order(2.0)
        assert is_integer_order(1.0 + 1e-13)
        assert not is_integer_order(1.5)
        assert not is_integer_order(-1.0)


class TestGrid:
    def test_uniform_nodes(self):
        g = Grid.uniform(2.0, 8)
        assert g.nodes[0] == 0.0
        assert g.nodes[-1] == 2.0
        assert g.n_intervals == 8
        assert g.is_uniform
        assert np.allclose(np.diff(g.nodes), 0.25)

    def test_graded_nodes_cluster_at_origin(self):
        g = Grid.graded(1.0, 16, 3.0)
        assert g.nodes[0] == 0.0
        assert g.nodes[-1] == 1.0
        assert not g.is_uniform
        spacings = np.diff(g.nodes)
        assert np.all(np.diff(spacings) > 0.0)  # widening away from 0
        assert g.nodes[1] == pytest.approx((1.0 / 16.0) ** 3)

    def test_matches(self):
        a = Grid.uniform(1.0, 8)
        b = Grid.uniform(1.0, 8)
        c = Grid.uniform(1.0, 16)
        assert a.matches(b)
        assert not a.matches(c)

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 1.0]))  # too few nodes
        with pytest.raises(ValueError):
            Grid(np.array([0.1, 0.5, 1.0]))  # does not start at 0
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 0.5, 0.25]))  # not increasing
        with pytest.raises(ValueError):
            Grid.graded(1.0, 8, 0.5)  # grading < 1
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 0.9, 1.0]))  # not a power law
        with pytest.raises(ValueError):
            Grid.uniform(-1.0, 8)

    @given(st.integers(min_value=2, max_value=64), st.floats(min_value=1.0, max_value=4.0))
    @settings(max_examples=60)
    def test_graded_construction_property(self, n, r):
        g = Grid.graded(1.5, n, r)
        assert g.nodes.size == n + 1
        assert g.horizon == pytest.approx(1.5)
        assert np.all(np.diff(g.nodes) > 0.0)


class TestSampledFunction:
    def test_regular_covers_all_nodes(self):
        g = Grid.uniform(1.0, 4)
        f = SampledFunction(g, np.arange(5.0))
        assert f.sample_times.size == 5

    def test_singular_skips_origin(self):
        g = Grid.uniform(1.0, 4)
        f = SampledFunction(g, np.arange(4.0), singular_exponent=0.5)
        assert f.sample_times[0] == g.nodes[1]
        assert f.sample_times.size == 4

    def test_from_callable(self):
        g = Grid.uniform(1.0, 8)
        f = SampledFunction.from_callable(g, lambda t: t**2)
        assert np.allclose(f.values, g.nodes**2)
        s = SampledFunction.from_callable(g, lambda t: t**-0.25, singular_exponent=0.25)
        assert np.allclose(s.values, g.nodes[1:] ** -0.25)

    def test_length_validation(self):
        g = Grid.uniform(1.0, 4)
        with pytest.raises(ValueError):
            SampledFunction(g, np.arange(4.0))  # regular needs N+1
        with pytest.raises(ValueError):
            SampledFunction(g, np.arange(5.0), singular_exponent=0.5)  # singular needs N

    def test_exponent_range(self):
        g = Grid.uniform(1.0, 4)
        with pytest.raises(ValueError):
            SampledFunction(g, np.arange(4.0), singular_exponent=1.0)
        with pytest.raises(ValueError):
            SampledFunction(g, np.arange(4.0), singular_exponent=-0.1)

    def test_arithmetic_requires_same_layout(self):
        g = Grid.uniform(1.0, 4)
        a = SampledFunction(g, np.ones(5))
        b = SampledFunction(g, 2.0 * np.ones(5))
        assert np.allclose((a + b).values, 3.0)
        assert np.allclose((b - a).values, 1.0)
        c = SampledFunction(Grid.uniform(1.0, 8), np.ones(9))
        with pytest.raises(ValueError):
            _ = a + c
        d = SampledFunction(g, np.ones(4), singular_exponent=0.5)
        with pytest.raises(ValueError):
            _ = a + d


class TestRegularQuadrature:
    @pytest.mark.parametrize("beta", BETAS)
    @pytest.mark.parametrize("n", (64, 1024))
    def test_exact_on_constants(self, beta, n):
        grid = Grid.uniform(1.0, n)
        op = build_integral_operator(beta, grid)
        out = apply_integral(op, SampledFunction.from_callable(grid, lambda t: np.ones_like(t)))
        exact = power_rule(beta, 0.0, grid.nodes)
        rel = np.abs(out.values[1:] - exact[1:]) / exact[1:]
        assert np.max(rel) < 1e-13

    @pytest.mark.parametrize("beta", BETAS)
    def test_exact_on_linear(self, beta):
        grid = Grid.uniform(2.0, 512)
        op = build_integral_operator(beta, grid)
        out = apply_integral(op, SampledFunction.from_callable(grid, lambda t: 3.0 * t - 1.0))
        exact = 3.0 * power_rule(beta, 1.0, grid.nodes) - power_rule(beta, 0.0, grid.nodes)
        scale = np.maximum(np.abs(exact[1:]), 1.0)
        assert np.max(np.abs(out.values[1:] - exact[1:]) / scale) < 1e-13

    @pytest.mark.parametrize("beta", BETAS)
    def test_exact_on_constants_graded(self, beta):
        grid = Grid.graded(1.0, 256, 3.0)
        op = build_integral_operator(beta, grid)
        out = apply_integral(op, SampledFunction.from_callable(grid, lambda t: np.ones_like(t)))
        exact = power_rule(beta, 0.0, grid.nodes)
        rel = np.abs(out.values[1:] - exact[1:]) / exact[1:]
        assert np.max(rel) < 1e-13

    def test_order_one_is_composite_trapezoid(self):
        grid = Grid.uniform(1.0, 64)
        op = build_integral_operator(1.0, grid)
        rng = np.random.default_rng(3)
        u = rng.normal(size=65)
        out = apply_integral(op, SampledFunction(grid, u))
        h = 1.0 / 64.0
        expected = np.concatenate(([0.0], np.cumsum(h * (u[1:] + u[:-1]) / 2.0)))
        assert np.allclose(out.values, expected, atol=1e-14)

    def test_converges_on_smooth_function(self):
        # second order on t^2 (not piecewise linear)
        errs = []
        for n in (64, 128, 256):
            grid = Grid.uniform(1.0, n)
            op = build_integral_operator(0.5, grid)
            out = apply_integral(op, SampledFunction.from_callable(grid, lambda t: t**2))
            errs.append(np.max(np.abs(out.values - power_rule(0.5, 2.0, grid.nodes))))
        rate = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
        assert min(rate) > 1.7

    def test_weights_table_matches_classical_formula(self):
        # independent construction from second differences of k^(beta+1);
        # numerically safe only at small N, which suffices as a cross-check
        beta, n = 0.7, 48
        grid = Grid.uniform(1.0, n)
        table = build_integral_operator(beta, grid).weights
        h = 1.0 / n
        c = h**beta / math.gamma(beta + 2.0)
        for row in (1, 2, 7, n - 1, n):
            expected = np.zeros(n + 1)
            expected[row] = c
            expected[0] = c * ((row - 1.0) ** (beta + 1.0) - row**beta * (row - beta - 1.0))
            for j in range(1, row):
                k = row - j
                expected[j] = c * (
                    (k + 1.0) ** (beta + 1.0) - 2.0 * k ** (beta + 1.0) + (k - 1.0) ** (beta + 1.0)
                )
            assert np.allclose(table[row, : row + 1], expected[: row + 1], rtol=0, atol=1e-12)

    def test_uniform_and_dense_paths_agree(self):
        # a grading of exactly 1.0 via the graded constructor uses the dense
        # table; it must reproduce the convolution path to round-off
        n = 128
        uni = Grid.uniform(1.0, n)
        dense_grid = Grid(uni.nodes, grading=1.0 + 1e-15)  # force the dense branch
        rng = np.random.default_rng(11)
        u = rng.normal(size=n + 1)
        for beta in (0.5, 1.7):
            a = apply_integral(build_integral_operator(beta, uni), SampledFunction(uni, u))
            b = apply_integral(
                build_integral_operator(beta, dense_grid), SampledFunction(dense_grid, u)
            )
            assert np.allclose(a.values, b.values, rtol=0, atol=1e-13)

    def test_product_trapezoid_against_mpmath_cells(self):
        # 40-digit oracle: integrate the kernel against the piecewise-linear
        # interpolant of random samples, cell by cell
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        n = 16
        grid = Grid.uniform(1.0, n)
        rng = np.random.default_rng(5)
        u = rng.uniform(-2.0, 2.0, size=n + 1)
        t = grid.nodes
        for beta in (0.3, 1.7):
            op = build_integral_operator(beta, grid)
            ours = apply_integral(op, SampledFunction(grid, u)).values
            for row in (1, 5, n):
                tn = mp.mpf(row) / n
                total = mp.mpf(0)
                for j in range(row):
                    a, b = mp.mpf(int(j)) / n, mp.mpf(int(j + 1)) / n
                    fa, fb = mp.mpf(float(u[j])), mp.mpf(float(u[j + 1]))
                    # linear interpolant through (a, fa), (b, fb)
                    slope = (fb - fa) / (b - a)
                    # integral of (tn - tau)^(beta-1) (fa + slope (tau - a))
                    s, w = mp.mpf(beta), tn - a
                    v = tn - b
                    m0 = (w**s - v**s) / s
                    m1 = (w ** (s + 1) - v ** (s + 1)) / (s + 1)
                    # tau = tn - u substitution: tau - a = (w - u)
                    total += fa * m0 + slope * (w * m0 - m1)
                oracle = float(total / mp.gamma(beta))
                assert ours[row] == pytest.approx(oracle, rel=3e-14, abs=1e-14)

    def test_grid_mismatch_rejected(self):
        op = build_integral_operator(0.5, Grid.uniform(1.0, 8))
        f = SampledFunction(Grid.uniform(1.0, 16), np.ones(17))
        with pytest.raises(ValueError):
            apply_integral(op, f)

    def test_rejects_nonpositive_order(self):
        with pytest.raises(ValueError):
            build_integral_operator(0.0, Grid.uniform(1.0, 8))


class TestIncompleteBeta:
    def test_against_scipy(self):
        special = pytest.importorskip("scipy.special")
        xs = np.linspace(0.0, 1.0, 41)
        worst = 0.0
        for p in (0.2, 0.5, 1.0, 1.5, 1.99):
            for q in (0.3, 0.5, 1.0, 1.7, 2.5, 4.0):
                ours = incomplete_beta(p, q, xs)
                complete = math.gamma(p) * math.gamma(q) / math.gamma(p + q)
                ref = special.betainc(p, q, xs) * complete
                scale = np.maximum(np.abs(ref), 1e-30)
                worst = max(worst, float(np.max(np.abs(ours - ref) / scale)))
        assert worst < 5e-13

    def test_endpoints(self):
        assert incomplete_beta(0.5, 0.7, np.array(0.0)) == 0.0
        full = incomplete_beta(0.5, 0.7, np.array(1.0))
        assert float(full) == pytest.approx(
            math.gamma(0.5) * math.gamma(0.7) / math.gamma(1.2), rel=1e-13
        )

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            incomplete_beta(-0.5, 1.0, np.array(0.5))
        with pytest.raises(ValueError):
            incomplete_beta(0.5, 1.0, np.array(1.5))


class TestWeightedQuadrature:
    @pytest.mark.parametrize("beta", (0.3, 0.5, 1.0, 1.7))
    @pytest.mark.parametrize("g", (0.25, 0.5, 0.75))
    def test_exact_on_pure_singularity(self, beta, g):
        grid = Grid.uniform(1.0, 256)
        f = SampledFunction.from_callable(grid, lambda t: t**-g, singular_exponent=g)
        if beta <= g:
            return  # covered by the boundary-case test below
        out = apply_integral(build_integral_operator(beta, grid), f)
        exact = math.gamma(1.0 - g) / math.gamma(1.0 - g + beta) * grid.nodes ** (beta - g)
        rel = np.abs(out.values[1:] - exact[1:]) / exact[1:]
        assert np.max(rel) < 5e-13

    def test_exact_on_singular_times_linear(self):
        beta, g = 0.5, 0.25
        grid = Grid.uniform(2.0, 128)
        f = SampledFunction.from_callable(
            grid, lambda t: t**-g * (1.5 - 0.5 * t), singular_exponent=g
        )
        out = apply_integral(build_integral_operator(beta, grid), f)
        t = grid.nodes
        exact = 1.5 * math.gamma(1.0 - g) / math.gamma(1.0 - g + beta) * t ** (beta - g) \
            - 0.5 * math.gamma(2.0 - g) / math.gamma(2.0 - g + beta) * t ** (beta - g + 1.0)
        scale = np.maximum(np.abs(exact[1:]), 1e-3)
        assert np.max(np.abs(out.values[1:] - exact[1:]) / scale) < 1e-12

    def test_exact_on_graded_mesh(self):
        beta, g = 0.5, 0.5
        grid = Grid.graded(1.0, 128, 2.5)
        f = SampledFunction.from_callable(grid, lambda t: t**-g, singular_exponent=g)
        vals = integral_node_values(build_integral_operator(beta, grid), f)
        # boundary case beta = g: the exact image is the constant gamma(1-g)
        assert np.allclose(vals, math.gamma(0.5), rtol=1e-12)

    def test_boundary_case_constant(self):
        g = 0.25
        grid = Grid.uniform(1.0, 64)
        f = SampledFunction.from_callable(grid, lambda t: t**-g, singular_exponent=g)
        vals = integral_node_values(build_integral_operator(g, grid), f)
        assert np.allclose(vals, math.gamma(1.0 - g), rtol=1e-12)

    def test_continuous_image_requires_order_above_exponent(self):
        grid = Grid.uniform(1.0, 32)
        f = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        with pytest.raises(ValueError):
            apply_integral(build_integral_operator(0.3, grid), f)

    def test_image_is_regular_and_vanishes_at_origin(self):
        grid = Grid.uniform(1.0, 64)
        f = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        out = apply_integral(build_integral_operator(0.8, grid), f)
        assert out.singular_exponent == 0.0
        assert out.values[0] == 0.0

    def test_weighted_table_cached(self):
        grid = Grid.uniform(1.0, 32)
        op = build_integral_operator(0.8, grid)
        f = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        apply_integral(op, f)
        table_first = op._weighted_tables[0.5]
        apply_integral(op, f)
        assert op._weighted_tables[0.5] is table_first


class TestCaputoDerivative:
    def test_power_rule_fractional(self):
        # D^1.5 t^2 = gamma(3)/gamma(1.5) t^0.5, checked away from the edges
        grid = Grid.uniform(1.0, 512)
        y = SampledFunction.from_callable(grid, lambda t: t**2)
        d = caputo_derivative(y, 1.5, (0.0, 0.0))
        t = grid.nodes[16:-16]
        exact = math.gamma(3.0) / math.gamma(1.5) * t**0.5
        assert np.max(np.abs(d.values[16:-16] - exact)) < 2e-3

    def test_integer_order_is_plain_derivative(self):
        grid = Grid.uniform(1.0, 256)
        y = SampledFunction.from_callable(grid, lambda t: t**3 + t)
        d = caputo_derivative(y, 2.0, (0.0, 1.0))
        exact = 6.0 * grid.nodes
        assert np.max(np.abs(d.values[4:-4] - exact[4:-4])) < 1e-9

    def test_annihilates_initial_polynomial(self):
        grid = Grid.uniform(1.0, 64)
        b = (0.7, -1.3)
        y = SampledFunction(grid, polynomial_from_derivatives(b, grid.nodes))
        d = caputo_derivative(y, 1.5, b)
        assert np.max(np.abs(d.values)) == 0.0

    def test_validation(self):
        grid = Grid.uniform(1.0, 64)
        y = SampledFunction.from_callable(grid, lambda t: t)
        with pytest.raises(ValueError):
            caputo_derivative(y, 1.5, (0.0,))  # needs 2 initial values
        s = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        with pytest.raises(ValueError):
            caputo_derivative(s, 0.5, (0.0,))  # singular samples refused
        tiny = Grid.uniform(1.0, 3)
        y3 = SampledFunction.from_callable(tiny, lambda t: t)
        with pytest.raises(ValueError):
            caputo_derivative(y3, 2.0, (0.0, 1.0))  # too coarse to difference twice


class TestPolynomialFromDerivatives:
    def test_matches_factorial_series(self):
        t = np.linspace(0.0, 2.0, 9)
        b = (1.0, -2.0, 3.0, 0.5)
        expected = sum(b[j] / math.factorial(j) * t**j for j in range(4))
        assert np.allclose(polynomial_from_derivatives(b, t), expected, rtol=1e-14)

    @given(st.lists(st.floats(min_value=-5.0, max_value=5.0), min_size=1, max_size=6))
    @settings(max_examples=80)
    def test_zero_padding_is_bitwise_neutral(self, b):
        t = np.linspace(0.0, 1.0, 33)
        plain = polynomial_from_derivatives(b, t)
        padded = polynomial_from_derivatives(list(b) + [0.0, 0.0], t)
        assert np.array_equal(plain, padded)


class TestWeightedNorm:
    def test_plain_sup_norm(self):
        grid = Grid.uniform(1.0, 8)
        f = SampledFunction(grid, np.array([0.0, -3.0, 1.0, 2.0, 0.5, 0.0, 1.0, -0.5, 2.5]))
        assert weighted_norm(f, 0.0) == 3.0

    def test_weight_tames_singularity(self):
        grid = Grid.uniform(1.0, 64)
        f = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        assert weighted_norm(f, 0.5) == pytest.approx(1.0, rel=1e-14)

    def test_weight_must_cover_exponent(self):
        grid = Grid.uniform(1.0, 64)
        f = SampledFunction.from_callable(grid, lambda t: t**-0.5, singular_exponent=0.5)
        with pytest.raises(ValueError):
            weighted_norm(f, 0.25)
        with pytest.raises(ValueError):
            weighted_norm(f, 1.0)

    @given(st.integers(min_value=0, max_value=1000))
    @settings(max_examples=40)
    def test_triangle_inequality_property(self, seed):
        rng = np.random.default_rng(seed)
        grid = Grid.uniform(1.0, 16)
        a = SampledFunction(grid, rng.normal(size=17))
        b = SampledFunction(grid, rng.normal(size=17))
        for g in (0.0, 0.5):
            assert weighted_norm(a + b, g) <= weighted_norm(a, g) + weighted_norm(b, g) + 1e-12
