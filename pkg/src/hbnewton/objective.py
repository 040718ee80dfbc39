"""Local objectives, the network-wide objective, and a centralized Newton reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, FactorizationError, MaxIterationsExceeded


def _check_vec(x, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p,):
        raise DimensionMismatch(f"expected a length-{p} vector, got shape {x.shape}")
    return x


def _spd_solve(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve, batched over leading axes."""
    try:
        c = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("Hessian is not numerically positive definite") from exc
    z = np.linalg.solve(c, rhs[..., None])
    return np.linalg.solve(np.swapaxes(c, -1, -2), z)[..., 0]


class LocalObjective:
    """Twice-differentiable strongly convex agent objective."""

    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian_solve(self, x, rhs) -> np.ndarray:
        rhs = _check_vec(rhs, self.dim)
        return _spd_solve(self.hessian(x), rhs)

    def constants(self) -> tuple[float, float]:
        """``(mu, lipschitz)`` bounds on the Hessian spectrum."""
        raise NotImplementedError


class QuadraticLocal(LocalObjective):
    """``0.5 x^T A x - b^T x`` with ``A`` symmetric positive definite."""

    def __init__(self, a, b):
        self.a = np.array(a, dtype=float)
        self.b = np.array(b, dtype=float)
        self.dim = self.b.shape[0]
        if self.a.shape != (self.dim, self.dim):
            raise DimensionMismatch("A must be p x p with p = len(b)")
        self.a.setflags(write=False)
        self.b.setflags(write=False)
        eig = np.linalg.eigvalsh(self.a)
        self._mu, self._lip = float(eig[0]), float(eig[-1])

    def value(self, x):
        x = _check_vec(x, self.dim)
        return float(0.5 * x @ self.a @ x - self.b @ x)

    def gradient(self, x):
        return self.a @ _check_vec(x, self.dim) - self.b

    def hessian(self, x):
        _check_vec(x, self.dim)
        return self.a.copy()

    def constants(self):
        return self._mu, self._lip


class LogisticLocal(LocalObjective):
    """Mean logistic loss over ``(u_j, v_j)`` plus ``(gamma/2)||x||^2``.

    Labels must be +-1.  The smoothness constant uses ``s(1-s) <= 1/4``.
    """

    def __init__(self, features, labels, gamma: float):
        self.features = np.array(features, dtype=float)
        self.labels = np.array(labels, dtype=float)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatch("features must be m x p and labels length m")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if gamma <= 0:
            raise ValueError("regularizer must be positive")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)
        self.gamma = float(gamma)
        self.m, self.dim = self.features.shape
        gram_top = np.linalg.eigvalsh(self.features.T @ self.features)[-1] if self.m else 0.0
        self._lip = self.gamma + max(float(gram_top), 0.0) / (4.0 * max(self.m, 1))

    def _margins(self, x):
        return self.labels * (self.features @ _check_vec(x, self.dim))

    def value(self, x):
        x = _check_vec(x, self.dim)
        loss = np.logaddexp(0.0, -self._margins(x)).mean() if self.m else 0.0
        return float(loss + 0.5 * self.gamma * x @ x)

    def gradient(self, x):
        x = _check_vec(x, self.dim)
        if not self.m:
            return self.gamma * x
        s = expit(-self._margins(x))
        return -(self.features.T @ (self.labels * s)) / self.m + self.gamma * x

    def hessian(self, x):
        x = _check_vec(x, self.dim)
        h = self.gamma * np.eye(self.dim)
        if self.m:
            s = expit(self._margins(x))
            h += (self.features.T * (s * (1.0 - s))) @ self.features / self.m
        return h

    def constants(self):
        return self.gamma, self._lip


class _StackedLogistic:
    """Batched evaluation for a network of logistic agents.

    Rows are zero-padded to a common length; a zero feature row contributes
    nothing to the gradient or Hessian, and each agent keeps its own 1/m_i.
    """

    def __init__(self, locals_):
        n, p = len(locals_), locals_[0].dim
        mmax = max(f.m for f in locals_)
        self.u = np.zeros((n, mmax, p))
        self.v = np.ones((n, mmax))
        self.mask = np.zeros((n, mmax))
        for i, f in enumerate(locals_):
            self.u[i, :f.m] = f.features
            self.v[i, :f.m] = f.labels
            self.mask[i, :f.m] = 1.0
        self.ut = np.ascontiguousarray(np.swapaxes(self.u, 1, 2))
        self.inv_m = np.array([1.0 / max(f.m, 1) for f in locals_])
        self.gamma = np.array([f.gamma for f in locals_])

    def values(self, x: np.ndarray) -> np.ndarray:
        z = self.v * np.matmul(self.u, x[:, :, None])[..., 0]
        loss = (np.logaddexp(0.0, -z) * self.mask).sum(axis=1) * self.inv_m
        return loss + 0.5 * self.gamma * np.einsum("np,np->n", x, x)

    def gradients(self, x: np.ndarray) -> np.ndarray:
        z = self.v * np.matmul(self.u, x[:, :, None])[..., 0]
        w = self.v * expit(-z) * self.inv_m[:, None]
        return -np.matmul(self.ut, w[:, :, None])[..., 0] + self.gamma[:, None] * x

    def hessians(self, x: np.ndarray) -> np.ndarray:
        s = expit(np.matmul(self.u, x[:, :, None])[..., 0])
        c = s * (1.0 - s) * self.inv_m[:, None]
        h = np.matmul(self.ut * c[:, None, :], self.u)
        h += self.gamma[:, None, None] * np.eye(x.shape[1])
        return h


class GlobalObjective:
    """``f(x) = (1/n) sum_i f_i(x)`` over a list of agent objectives."""

    def __init__(self, locals_, batched: bool = True):
        self.locals = list(locals_)
        if not self.locals:
            raise ValueError("need at least one local objective")
        self.dim = self.locals[0].dim
        if any(f.dim != self.dim for f in self.locals):
            raise DimensionMismatch("local objectives disagree on dimension")
        self.n = len(self.locals)
        self._stack = None
        if batched and all(isinstance(f, LogisticLocal) for f in self.locals):
            self._stack = _StackedLogistic(self.locals)

    def constants(self) -> tuple[float, float, float]:
        return smoothness_constants(self)

    # single-point evaluation of the averaged objective
    def value(self, x) -> float:
        if self._stack is not None:
            x = _check_vec(x, self.dim)
            return float(self._stack.values(np.broadcast_to(x, (self.n, self.dim))).mean())
        return float(np.mean([f.value(x) for f in self.locals]))

    def gradient(self, x) -> np.ndarray:
        x = _check_vec(x, self.dim)
        if self._stack is not None:
            return self._stack.gradients(np.broadcast_to(x, (self.n, self.dim))).mean(axis=0)
        return np.mean([f.gradient(x) for f in self.locals], axis=0)

    def hessian(self, x) -> np.ndarray:
        x = _check_vec(x, self.dim)
        if self._stack is not None:
            return self._stack.hessians(np.broadcast_to(x, (self.n, self.dim))).mean(axis=0)
        return np.mean([f.hessian(x) for f in self.locals], axis=0)

    # row-wise evaluation: agent i at row i of X
    def _check_rows(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.dim):
            raise DimensionMismatch(f"expected {self.n} x {self.dim}, got {x.shape}")
        return x

    def stacked_gradient(self, x) -> np.ndarray:
        x = self._check_rows(x)
        if self._stack is not None:
            return self._stack.gradients(x)
        return np.stack([f.gradient(xi) for f, xi in zip(self.locals, x)])

    def stacked_value(self, x) -> float:
        x = self._check_rows(x)
        if self._stack is not None:
            return float(self._stack.values(x).mean())
        return float(np.mean([f.value(xi) for f, xi in zip(self.locals, x)]))

    def stacked_hessian_solve(self, x, rhs) -> np.ndarray:
        x = self._check_rows(x)
        rhs = self._check_rows(rhs)
        if self._stack is not None:
            return _spd_solve(self._stack.hessians(x), rhs)
        return np.stack([f.hessian_solve(xi, ri) for f, xi, ri in zip(self.locals, x, rhs)])


def smoothness_constants(obj: GlobalObjective) -> tuple[float, float, float]:
    """``(mu, L, Q)`` with mu the smallest and L the largest agent constant."""
    pairs = [f.constants() for f in obj.locals]
    mu = min(p[0] for p in pairs)
    lip = max(p[1] for p in pairs)
    return mu, lip, lip / mu


def lambda_max_power(a: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    a = np.asarray(a, dtype=float)
    v = np.ones(a.shape[0]) / np.sqrt(a.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        u = a @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(nu - lam) <= tol * nu:
            return float(v @ a @ v)
        lam = nu
    raise MaxIterationsExceeded("power iteration did not converge")


@dataclass(frozen=True)
class NewtonResult:
    x_star: np.ndarray
    f_star: float
    iterations: int
    grad_norms: tuple[float, ...]


def centralized_newton(
    obj: GlobalObjective,
    x0,
    tol: float = 1e-12,
    c1: float = 1e-4,
    rho: float = 0.5,
    max_iter: int = 200,
) -> NewtonResult:
    """Damped Newton on the averaged objective with Armijo backtracking.

    ``iterations`` counts Newton steps taken; the gradient-norm history has
    one extra entry for the starting point.
    """
    if tol <= 0 or not 0 < c1 < 0.5 or not 0 < rho < 1:
        raise ValueError("need tol > 0, 0 < c1 < 0.5, 0 < rho < 1")
    x = _check_vec(x0, obj.dim).copy()
    fx = obj.value(x)
    g = obj.gradient(x)
    norms = [float(np.linalg.norm(g))]
    for k in range(max_iter + 1):
        if norms[-1] <= tol:
            return NewtonResult(x, fx, k, tuple(norms))
        if k == max_iter:
            break
        d = -_spd_solve(obj.hessian(x), g)
        slope = float(g @ d)
        step = 1.0
        # the eps term keeps the test meaningful once f stalls at rounding level
        fuzz = 4.0 * np.finfo(float).eps * abs(fx)
        while True:
            x_new = x + step * d
            f_new = obj.value(x_new)
            if f_new <= fx + c1 * step * slope + fuzz or step < 1e-20:
                break
            step *= rho
        x, fx = x_new, f_new
        g = obj.gradient(x)
        norms.append(float(np.linalg.norm(g)))
    raise MaxIterationsExceeded(f"Newton did not reach ||grad|| <= {tol} in {max_iter} steps")
