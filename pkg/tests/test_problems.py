import numpy as np
import pytest

from dcl.errors import DimensionMismatch, NonPositiveScale
from dcl.problems import (
    AgentObjective,
    ProblemInstance,
    geometric_median,
    least_squares_l1,
    logistic_l1,
    prox_l1,
    prox_l2norm,
    prox_quadratic_matrix,
)


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for t in range(x.size):
        e = np.zeros_like(x)
        e[t] = h
        g[t] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def power_iteration_sq(A, iters=2000):
    # largest eigenvalue of A^T A, i.e. sigma_max(A)^2
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.shape[1])
    for _ in range(iters):
        v = A.T @ (A @ v)
        v /= np.linalg.norm(v)
    return float(v @ (A.T @ (A @ v)))


class TestProxL1:
    def test_hand_values(self):
        assert np.allclose(prox_l1(np.array([3.0, -0.5, 0.0]), 1.0), [2.0, 0.0, 0.0], atol=0)

    def test_zero_point(self):
        assert np.array_equal(prox_l1(np.zeros(4), 0.7), np.zeros(4))

    def test_requires_positive_scale(self):
        with pytest.raises(NonPositiveScale):
            prox_l1(np.ones(2), 0.0)

    def test_matches_grid_search(self):
        # 1-D oracle: minimize theta*|x| + (x-u)^2/(2*alpha) over a fine grid
        theta, alpha = 0.3, 1.7
        grid = np.arange(-10.0, 10.0, 1e-4)
        for u in (-4.2, -0.1, 0.0, 0.25, 3.9):
            objective = theta * np.abs(grid) + (grid - u) ** 2 / (2 * alpha)
            best = grid[np.argmin(objective)]
            got = prox_l1(np.array([u]), alpha * theta)[0]
            assert abs(got - best) < 1e-3


class TestProxL2Norm:
    def test_inside_ball_snaps_to_center(self):
        assert np.allclose(prox_l2norm(np.array([3.0, 0.0]), np.zeros(2), 5.0), [0.0, 0.0])

    def test_radial_shrink(self):
        assert np.allclose(prox_l2norm(np.array([3.0, 0.0]), np.zeros(2), 1.0), [2.0, 0.0])

    def test_requires_positive_scale(self):
        with pytest.raises(NonPositiveScale):
            prox_l2norm(np.ones(2), np.zeros(2), -1.0)

    def test_nonexpansive(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal(3)
        for _ in range(100):
            u, v = rng.standard_normal(3), rng.standard_normal(3)
            lhs = np.linalg.norm(prox_l2norm(u, b, 0.8) - prox_l2norm(v, b, 0.8))
            assert lhs <= np.linalg.norm(u - v) + 1e-12


class TestProxQuadraticMatrix:
    def test_small_scale_limit_returns_u(self):
        U = np.arange(6.0).reshape(2, 3)
        out = prox_quadratic_matrix(U, np.ones((2, 3)), 1e-14)
        assert np.allclose(out, U, atol=1e-12)

    def test_target_fixed_point(self):
        T = np.arange(4.0).reshape(2, 2)
        for lam in (0.1, 1.0, 50.0):
            assert np.allclose(prox_quadratic_matrix(T, T, lam), T)

    def test_halfway(self):
        T = np.full((3, 2), 4.0)
        assert np.allclose(prox_quadratic_matrix(np.zeros((3, 2)), T, 1.0), T / 2)

    def test_shape_check(self):
        with pytest.raises(DimensionMismatch):
            prox_quadratic_matrix(np.zeros((2, 2)), np.zeros((3, 2)), 1.0)


class TestLeastSquaresL1:
    def test_identity_sensing(self):
        o = least_squares_l1(np.eye(2), np.zeros(2), 0.0)
        assert np.allclose(o.grad_s(np.array([1.0, 2.0])), [1.0, 2.0])
        assert o.lipschitz == pytest.approx(1.0)

    def test_normalized_matrix_has_unit_lipschitz(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 50))
        A /= np.linalg.norm(A, 2)
        o = least_squares_l1(A, rng.standard_normal(3), 0.01)
        assert abs(o.lipschitz - 1.0) < 1e-10
        assert abs(o.lipschitz - power_iteration_sq(A)) < 1e-10

    def test_value_includes_both_terms(self):
        o = least_squares_l1(np.eye(2), np.array([1.0, 0.0]), 0.5)
        x = np.array([0.0, 2.0])
        assert o.value(x) == pytest.approx(0.5 * (1 + 4) + 0.5 * 2)

    def test_shape_check(self):
        with pytest.raises(DimensionMismatch):
            least_squares_l1(np.eye(2), np.zeros(3), 0.1)


class TestLogisticL1:
    def test_single_sample_gradient_at_zero(self):
        o = logistic_l1(np.array([[1.0, 0.0]]), np.array([1.0]), 0.0)
        assert np.allclose(o.grad_s(np.zeros(2)), [-0.5, 0.0])

    def test_saturated_margin_gradient_vanishes(self):
        o = logistic_l1(np.array([[1.0, 0.0]]), np.array([1.0]), 0.0)
        g = o.grad_s(np.array([1e4, 0.0]))
        assert np.all(np.abs(g) < 1e-12)
        assert np.isfinite(o.value(np.array([1e4, 0.0])))

    def test_large_negative_margin_stable(self):
        o = logistic_l1(np.array([[1.0]]), np.array([-1.0]), 0.0)
        assert np.isfinite(o.value(np.array([1e4])))
        assert np.isfinite(o.grad_s(np.array([1e4]))[0])

    def test_label_validation(self):
        with pytest.raises(ValueError):
            logistic_l1(np.ones((1, 2)), np.array([0.5]), 0.1)


class TestGeometricMedian:
    def test_zero_gradient(self):
        o = geometric_median(np.array([1.0, 2.0]))
        assert np.array_equal(o.grad_s(np.array([9.0, -3.0])), [0.0, 0.0])
        assert o.lipschitz == 0.0

    def test_prox_at_center(self):
        b = np.array([1.0, -2.0])
        o = geometric_median(b)
        for lam in (0.1, 1.0, 10.0):
            assert np.allclose(o.prox_r(b.copy(), lam), b)

    def test_prox_shrinks_toward_center(self):
        o = geometric_median(np.zeros(2))
        assert np.allclose(o.prox_r(np.array([3.0, 0.0]), 1.0), [2.0, 0.0])


def random_objectives(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 6))
    H = rng.standard_normal((4, 6))
    d = np.where(rng.uniform(size=4) < 0.5, 1.0, -1.0)
    return [
        least_squares_l1(A, rng.standard_normal(3), 0.01),
        logistic_l1(H, d, 0.1),
        geometric_median(rng.standard_normal(6)),
    ]


class TestOracleProperties:
    @pytest.mark.parametrize("obj_idx", [0, 1, 2])
    def test_gradient_matches_finite_differences(self, obj_idx):
        obj = random_objectives(7)[obj_idx]
        rng = np.random.default_rng(17)

        def smooth(x):  # value minus the nonsmooth part, via a tiny detour
            if obj.kind == "least_squares_l1":
                r = obj.data["A"] @ x - obj.data["b"]
                return 0.5 * r @ r
            if obj.kind == "logistic_l1":
                margins = obj.data["d"] * (obj.data["H"] @ x)
                return np.logaddexp(0.0, -margins).mean()
            return 0.0

        for _ in range(50):
            x = rng.standard_normal(6)
            g = obj.grad_s(x)
            fd = central_diff(smooth, x)
            denom = max(np.linalg.norm(fd), 1e-8)
            assert np.linalg.norm(g - fd) / denom < 1e-5

    @pytest.mark.parametrize("obj_idx", [0, 1, 2])
    def test_lipschitz_bound_holds(self, obj_idx):
        obj = random_objectives(23)[obj_idx]
        rng = np.random.default_rng(29)
        for _ in range(200):
            x, y = rng.standard_normal(6), rng.standard_normal(6)
            lhs = np.linalg.norm(obj.grad_s(x) - obj.grad_s(y))
            assert lhs <= obj.lipschitz * np.linalg.norm(x - y) * (1 + 1e-8) + 1e-15

    @pytest.mark.parametrize("obj_idx", [0, 1, 2])
    def test_prox_dominates_random_candidates(self, obj_idx):
        obj = random_objectives(31)[obj_idx]
        rng = np.random.default_rng(37)
        theta = obj.data.get("theta", None)

        def r_val(x):
            if obj.kind == "geometric_median":
                return np.linalg.norm(x - obj.data["b"], axis=-1)
            return theta * np.abs(x).sum(axis=-1)

        lam = 0.9
        u = rng.standard_normal(6)
        xh = obj.prox_r(u, lam)
        best = r_val(xh) + np.sum((xh - u) ** 2) / (2 * lam)
        cand = xh[None, :] + 0.5 * rng.standard_normal((200_000, 6))
        vals = r_val(cand) + np.sum((cand - u) ** 2, axis=1) / (2 * lam)
        assert best <= vals.min() + 1e-8

    def test_prox_nonexpansive_all_families(self):
        rng = np.random.default_rng(41)
        for obj in random_objectives(43):
            for _ in range(100):
                u, v = rng.standard_normal(6), rng.standard_normal(6)
                lhs = np.linalg.norm(obj.prox_r(u, 0.7) - obj.prox_r(v, 0.7))
                assert lhs <= np.linalg.norm(u - v) + 1e-12


class TestProblemInstance:
    def test_dimensions_and_totals(self):
        objs = random_objectives(5)
        prob = ProblemInstance(p=6, objectives=objs)
        assert prob.n == 3
        x = np.zeros(6)
        assert prob.total_value(x) == pytest.approx(sum(o.value(x) for o in objs))
        assert prob.max_lipschitz == max(o.lipschitz for o in objs)

    def test_json_round_trip(self):
        prob = ProblemInstance(p=6, objectives=random_objectives(9), reference_solution=np.ones(6))
        back = ProblemInstance.from_json(prob.to_json())
        rng = np.random.default_rng(0)
        assert back.p == prob.p and back.n == prob.n
        assert np.array_equal(back.reference_solution, prob.reference_solution)
        for a, b in zip(prob.objectives, back.objectives):
            x = rng.standard_normal(6)
            assert a.value(x) == pytest.approx(b.value(x), abs=1e-15)
            assert np.allclose(a.grad_s(x), b.grad_s(x), atol=1e-15)
