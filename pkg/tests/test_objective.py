import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbnewton.errors import DimensionMismatch, FactorizationError, MaxIterationsExceeded
from hbnewton.objective import (
    GlobalObjective,
    LogisticLocal,
    QuadraticLocal,
    centralized_newton,
    lambda_max_power,
    smoothness_constants,
)


def fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(grad, x, h=1e-6):
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((grad(x + e) - grad(x - e)) / (2 * h))
    return np.column_stack(cols)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def random_logistic(rng, m=40, p=5, gamma=0.05):
    u = rng.standard_normal((m, p))
    v = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    return LogisticLocal(u, v, gamma)


def test_quadratic_identity_gradient(rng):
    x = rng.standard_normal(4)
    np.testing.assert_allclose(QuadraticLocal(np.eye(4), np.zeros(4)).gradient(x), x)


def test_logistic_single_sample_at_zero():
    u = np.array([1.0, -2.0, 0.5])
    for v in (1.0, -1.0):
        f = LogisticLocal(u[None, :], [v], gamma=1e-300)
        np.testing.assert_allclose(f.gradient(np.zeros(3)), -(v / 2) * u, atol=1e-15)


def test_logistic_rejects_zero_gamma():
    with pytest.raises(ValueError):
        LogisticLocal(np.ones((2, 2)), [1, -1], 0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 3.0))
def test_logistic_derivatives_match_finite_differences(seed, scale):
    rng = np.random.default_rng(seed)
    f = random_logistic(rng)
    x = scale * rng.standard_normal(f.dim)
    assert rel_err(f.gradient(x), fd_gradient(f.value, x)) <= 1e-5
    assert rel_err(f.hessian(x), fd_hessian(f.gradient, x)) <= 1e-5


def test_hessian_solve_cases(rng):
    q = QuadraticLocal(2 * np.eye(3), np.zeros(3))
    np.testing.assert_allclose(q.hessian_solve(np.zeros(3), np.full(3, 4.0)), np.full(3, 2.0))
    f = random_logistic(rng)
    x = rng.standard_normal(f.dim)
    assert np.all(f.hessian_solve(x, np.zeros(f.dim)) == 0)
    rhs = rng.standard_normal(f.dim)
    np.testing.assert_allclose(f.hessian(x) @ f.hessian_solve(x, rhs), rhs, rtol=1e-12)


def test_hessian_solve_non_spd():
    q = QuadraticLocal(np.diag([1.0, -1.0]), np.zeros(2))
    with pytest.raises(FactorizationError):
        q.hessian_solve(np.zeros(2), np.ones(2))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        QuadraticLocal(np.eye(2), np.zeros(2)).gradient(np.zeros(3))


def test_smoothness_constants_quadratic():
    obj = GlobalObjective([QuadraticLocal(np.diag([1.0, 4.0]), np.zeros(2))] * 3)
    assert smoothness_constants(obj) == (1.0, 4.0, 4.0)


def test_smoothness_constants_zero_features():
    obj = GlobalObjective([LogisticLocal(np.zeros((5, 3)), np.ones(5), 0.05)])
    assert smoothness_constants(obj) == pytest.approx((0.05, 0.05, 1.0))


def test_lambda_max_power_vs_dense(desk):
    for f in desk.objective.locals[:5]:
        gram = f.features.T @ f.features
        dense = np.linalg.eigvalsh(gram)[-1]
        assert lambda_max_power(gram) == pytest.approx(dense, rel=1e-8)


def test_batched_matches_per_agent(desk, rng):
    obj = desk.objective
    plain = GlobalObjective(obj.locals, batched=False)
    x = rng.standard_normal((obj.n, obj.dim))
    rhs = rng.standard_normal((obj.n, obj.dim))
    np.testing.assert_allclose(obj.stacked_gradient(x), plain.stacked_gradient(x), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(obj.stacked_hessian_solve(x, rhs), plain.stacked_hessian_solve(x, rhs), rtol=1e-11)
    assert obj.stacked_value(x) == pytest.approx(plain.stacked_value(x), rel=1e-14)
    xb = x[0]
    assert obj.value(xb) == pytest.approx(plain.value(xb), rel=1e-14)
    np.testing.assert_allclose(obj.hessian(xb), plain.hessian(xb), rtol=1e-13, atol=1e-16)


def test_newton_exact_on_quadratic(rng):
    a = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    res = centralized_newton(GlobalObjective([QuadraticLocal(a, b)]), rng.standard_normal(2))
    np.testing.assert_allclose(res.x_star, np.linalg.solve(a, b), atol=1e-14)
    assert res.iterations == 1


def test_newton_fixed_point(desk):
    res = desk.reference
    assert res.grad_norms[-1] <= 1e-12
    again = centralized_newton(desk.objective, res.x_star)
    assert again.iterations == 0


def test_newton_iteration_cap(desk):
    with pytest.raises(MaxIterationsExceeded):
        centralized_newton(desk.objective, np.zeros(desk.objective.dim), max_iter=2)
