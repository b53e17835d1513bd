import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from bubblekit import lbfgsb


def rosenbrock(x):
    f = optimize.rosen(x)
    return f, optimize.rosen_der(x)


def quadratic(A, c):
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)

    def fun(x):
        return 0.5 * x @ A @ x - c @ x, A @ x - c

    return fun


class TestMinimize:
    def test_unbounded_rosenbrock(self):
        res = lbfgsb.minimize(rosenbrock, [-1.2, 1.0], [-10, -10], [10, 10])
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)

    @pytest.mark.parametrize(
        "lower,upper",
        [([-2, -2], [0.8, 2]), ([1.2, -2], [2, 2]), ([-2, 1.5], [2, 3]), ([-np.inf, -np.inf], [0.5, 0.5])],
    )
    def test_bounded_rosenbrock_matches_scipy(self, lower, upper):
        x0 = np.clip([-1.2, 1.0], lower, upper)
        res = lbfgsb.minimize(rosenbrock, x0, lower, upper)
        ref = optimize.minimize(
            optimize.rosen, x0, jac=optimize.rosen_der, method="L-BFGS-B",
            bounds=list(zip(lower, upper)), options={"ftol": 1e-15, "gtol": 1e-12},
        )
        assert res.converged
        np.testing.assert_allclose(res.x, ref.x, atol=1e-5)
        assert res.fun <= ref.fun + 1e-10

    def test_active_bounds_quadratic(self):
        # unconstrained minimum at (3, -3); box clips both coordinates
        fun = quadratic(np.eye(2), [3.0, -3.0])
        res = lbfgsb.minimize(fun, [0.0, 0.0], [-1.0, -1.0], [1.0, 1.0])
        np.testing.assert_allclose(res.x, [1.0, -1.0])
        assert res.converged

    def test_start_outside_box_is_projected(self):
        fun = quadratic(np.eye(2), [0.0, 0.0])
        res = lbfgsb.minimize(fun, [5.0, -5.0], [-1.0, -1.0], [1.0, 1.0])
        np.testing.assert_allclose(res.x, [0.0, 0.0], atol=1e-8)

    def test_history_monotone(self):
        res = lbfgsb.minimize(rosenbrock, [-1.2, 1.0], [-2, -2], [2, 2])
        h = np.array(res.history)
        assert np.all(np.diff(h) <= lbfgsb.NOISE_REL * (1 + np.abs(h[:-1])))

    def test_iteration_cap(self):
        res = lbfgsb.minimize(rosenbrock, [-1.2, 1.0], [-2, -2], [2, 2], max_iter=3)
        assert not res.converged and res.iterations == 3
        assert res.message == "maximum iterations reached"

    def test_non_finite_start(self):
        with pytest.raises(ValueError):
            lbfgsb.minimize(lambda x: (math.inf, x), [0.0], [-1.0], [1.0])

    def test_stays_in_box(self):
        seen = []

        def fun(x):
            seen.append(x.copy())
            return rosenbrock(x)

        lbfgsb.minimize(fun, [0.0, 0.0], [-0.5, 0.2], [0.7, 0.4])
        xs = np.array(seen)
        assert np.all(xs >= [-0.5, 0.2]) and np.all(xs <= [0.7, 0.4])

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_random_convex_quadratics(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        M = rng.standard_normal((n, n))
        A = M @ M.T + 0.1 * np.eye(n)
        c = rng.standard_normal(n) * 3
        lo, hi = -np.ones(n), np.ones(n)
        res = lbfgsb.minimize(quadratic(A, c), np.zeros(n), lo, hi)
        ref = optimize.minimize(
            lambda x: 0.5 * x @ A @ x - c @ x, np.zeros(n), jac=lambda x: A @ x - c,
            method="L-BFGS-B", bounds=[(-1, 1)] * n, options={"ftol": 1e-15, "gtol": 1e-12},
        )
        assert res.converged
        assert res.fun <= ref.fun + 1e-8


class TestPieces:
    def test_projected_gradient(self):
        pg = lbfgsb.projected_gradient(np.array([0.0, 1.0]), np.array([1.0, -1.0]), np.array([0.0, 0.0]), np.array([2.0, 1.0]))
        np.testing.assert_allclose(pg, [0.0, 0.0])

    def test_compact_matrix_secant(self):
        rng = np.random.default_rng(0)
        A = np.diag([1.0, 4.0, 9.0])
        s = [rng.standard_normal(3) for _ in range(2)]
        y = [A @ v for v in s]
        B = lbfgsb._compact_matrix(s, y, 2.0, 3)
        # the newest pair satisfies the secant equation exactly
        np.testing.assert_allclose(B @ s[-1], y[-1], rtol=1e-10)
        np.testing.assert_allclose(B, B.T, atol=1e-12)

    def test_cauchy_point_interior(self):
        B = np.eye(2)
        x, g = np.zeros(2), np.array([1.0, 2.0])
        xc, fixed = lbfgsb.cauchy_point(x, g, B, -10 * np.ones(2), 10 * np.ones(2))
        np.testing.assert_allclose(xc, -g)
        assert not fixed.any()

    def test_cauchy_point_hits_bound(self):
        B = np.eye(2)
        xc, fixed = lbfgsb.cauchy_point(np.zeros(2), np.array([1.0, 2.0]), B, np.array([-0.5, -10.0]), np.array([10.0, 10.0]))
        assert xc[0] == -0.5 and fixed[0]

    def test_line_search_wolfe(self):
        fun = quadratic(np.diag([1.0, 10.0]), [0.0, 0.0])
        x = np.array([1.0, 1.0])
        f0, g0 = fun(x)
        p = -g0
        step, f, g, _ = lbfgsb.line_search(fun, x, f0, g0, p, np.inf)
        assert f <= f0 + lbfgsb.C1 * step * (g0 @ p)
        assert abs(g @ p) <= lbfgsb.C2 * abs(g0 @ p)

    def test_cubic_min(self):
        # f = (s - 1)^2 sampled at 0 and 3
        s = lbfgsb._cubic_min(0.0, 1.0, -2.0, 3.0, 4.0, 4.0)
        assert s == pytest.approx(1.0)
