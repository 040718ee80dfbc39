"""Error vectors, the 4x4 contraction matrix, and step-size certificates.

The linear-convergence analysis bounds the error vector
``e = (consensus, tracking, optimality, momentum)`` by ``e(t+1) <= M e(t)``
elementwise, where ``M(alpha, beta)`` is a nonnegative 4x4 matrix built from
``(mu, L, Q, sigma, eta)``.  A strictly positive ``eps`` with
``M eps < eps`` certifies ``rho(M) < 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyRegionError, InfeasibleError, InsufficientTraceError

SLACK = 1e-9


@dataclass(frozen=True)
class ErrorVector:
    consensus: float
    tracking: float
    optimality: float
    momentum: float

    def as_array(self) -> np.ndarray:
        return np.array([self.consensus, self.tracking, self.optimality, self.momentum])

    def norm(self) -> float:
        a = self.as_array()
        return float(np.linalg.norm(a[np.isfinite(a)]))


def error_vector(state, x_star=None) -> ErrorVector:
    """Errors of a network state; optimality is NaN without ``x_star``."""
    x, y = state.x, state.y
    n = x.shape[0]
    xbar = x.mean(axis=0)
    ybar = y.mean(axis=0)
    opt = math.nan
    if x_star is not None:
        opt = math.sqrt(n) * float(np.linalg.norm(xbar - np.asarray(x_star, dtype=float)))
    return ErrorVector(
        consensus=float(np.linalg.norm(x - xbar)),
        tracking=float(np.linalg.norm(y - ybar)),
        optimality=opt,
        momentum=float(np.linalg.norm(x - state.x_prev)),
    )


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    lipschitz: float
    sigma: float
    eta: float
    n: int = 1
    Q: float = field(init=False)
    sigma_bar: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.mu <= self.lipschitz:
            raise ValueError("need 0 < mu <= L")
        if not 0 <= self.sigma < 1:
            raise ValueError("need 0 <= sigma < 1")
        if self.eta < 0:
            raise ValueError("need eta >= 0")
        object.__setattr__(self, "Q", self.lipschitz / self.mu)
        object.__setattr__(self, "sigma_bar", 1.0 - self.sigma)

    @classmethod
    def from_problem(cls, objective, weights) -> "ProblemConstants":
        mu, lip, _ = objective.constants()
        return cls(mu, lip, weights.sigma, weights.eta, objective.n)


def _matrix(c: ProblemConstants, alpha: float, beta: float) -> np.ndarray:
    mu, lip, q, s, eta = c.mu, c.lipschitz, c.Q, c.sigma, c.eta
    return np.array([
        [s + alpha * q, alpha / mu, alpha * q, beta],
        [lip * (eta + alpha * q), s + alpha * q, lip * alpha * q, lip * beta],
        [alpha * q, alpha / mu, 1.0 - alpha / q, beta],
        [eta + alpha * q, alpha / mu, alpha * q, beta],
    ])


@dataclass(frozen=True, eq=False)
class ContractionMatrix:
    m: np.ndarray
    alpha: float
    beta: float
    rho: float
    within_step_limit: bool

    def bound(self, e) -> np.ndarray:
        return self.m @ np.asarray(e, dtype=float)


def contraction_matrix(c: ProblemConstants, alpha: float, beta: float) -> ContractionMatrix:
    """Build ``M(alpha, beta)``.

    The bound it encodes needs ``alpha <= mu/L``; larger steps still build
    the matrix but emit a warning and set ``within_step_limit=False``.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    ok = alpha <= c.mu / c.lipschitz
    if not ok:
        warnings.warn(f"alpha={alpha} exceeds mu/L={c.mu / c.lipschitz}; the bound is not guaranteed",
                      stacklevel=2)
    m = _matrix(c, alpha, beta)
    m.setflags(write=False)
    return ContractionMatrix(m, alpha, beta, spectral_radius(m), ok)


# --------------------------------------------------------------------------
# spectral radius
# --------------------------------------------------------------------------

def _collatz_wielandt(m: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray] | None:
    """Power iteration bracketing rho between min and max of (Mv)_i / v_i."""
    v = np.ones(m.shape[0])
    for _ in range(max_iter):
        u = m @ v
        if not np.all(u > 0):
            return None
        r = u / v
        lo, hi = r.min(), r.max()
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi), u / u.sum()
        v = u / u.max()
    return None


def spectral_radius(m, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Perron root of a nonnegative square matrix.

    Falls back to a dense eigensolver when the Collatz-Wielandt bracket does
    not close (reducible or periodic matrices).
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError("spectral_radius expects a finite nonnegative matrix")
    # bracket stalls on zero rows of the iterate; cap those cases quickly
    got = _collatz_wielandt(m, tol, max_iter if np.all(m > 0) else min(max_iter, 5_000))
    if got is not None:
        return float(got[0])
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def charpoly(m) -> np.ndarray:
    """Characteristic polynomial coefficients (highest first), Faddeev-LeVerrier."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    coeffs = [1.0]
    k_mat = np.eye(n)
    for k in range(1, n + 1):
        am = m @ k_mat
        ck = -np.trace(am) / k
        coeffs.append(ck)
        k_mat = am + ck * np.eye(n)
    return np.array(coeffs)


def spectral_radius_polynomial(m) -> float:
    """Largest root modulus of the characteristic polynomial, Newton-polished."""
    coeffs = charpoly(m)
    roots = np.roots(coeffs)
    r = roots[np.argmax(np.abs(roots))]
    dp = np.polyder(coeffs)
    for _ in range(3):
        d = np.polyval(dp, r)
        if d == 0:
            break
        r = r - np.polyval(coeffs, r) / d
    return float(abs(r))


def perron_vector(m) -> np.ndarray:
    """Nonnegative eigenvector at the spectral radius, normalized to sum 1."""
    m = np.asarray(m, dtype=float)
    # M + I shares the Perron vector and is primitive whenever M is irreducible
    shifted = m if np.all(m > 0) else m + np.eye(m.shape[0])
    got = _collatz_wielandt(shifted, 1e-14, 100_000)
    if got is not None and np.all(got[1] > 0):
        return got[1]
    vals, vecs = np.linalg.eig(m)
    k = int(np.argmax(vals.real + 0.0 * vals.imag))
    v = np.abs(vecs[:, k].real)
    return v / v.sum()


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonCertificate:
    eps: tuple[float, float, float, float]
    eps_tilde: float
    eps_bar: float
    constants: ProblemConstants

    def scaled(self, factor: float) -> "EpsilonCertificate":
        return make_certificate(self.constants, tuple(factor * e for e in self.eps))

    def eps1_bounds(self) -> tuple[float, float, float]:
        c = self.constants
        e1, e2, e3, e4 = self.eps
        inf = math.inf
        return (
            c.sigma_bar * e2 / (c.lipschitz * c.eta) if c.eta > 0 else inf,
            e3 / c.Q ** 2 - e2 / (c.mu * c.Q),
            e4 / c.eta if c.eta > 0 else inf,
        )

    def slack(self) -> float:
        """Smallest relative margin ``1 - eps1/bound`` over the three bounds."""
        return min(1.0 - self.eps[0] / b for b in self.eps1_bounds())

    def alpha_bounds(self) -> tuple[float, float, float, float]:
        c = self.constants
        e1, e2, e3, e4 = self.eps
        return (
            1.0 / c.Q,
            c.sigma_bar * e1 / self.eps_tilde,
            (c.sigma_bar * e2 - c.lipschitz * c.eta * e1) / self.eps_bar,
            (e4 - c.eta * e1) / self.eps_tilde,
        )

    def beta_bounds(self, alpha: float) -> tuple[float, ...]:
        """Upper bounds on beta at ``alpha``, one per matrix row.

        Row one appears twice: once with ``eps2`` and once with ``eps1``
        (the two forms disagree; the smaller is binding).
        """
        c = self.constants
        e1, e2, e3, e4 = self.eps
        et, eb, sb = self.eps_tilde, self.eps_bar, c.sigma_bar
        return (
            et / e4 * (sb * e2 / et - alpha),
            et / e4 * (sb * e1 / et - alpha),
            eb / (c.lipschitz * e4) * ((sb * e2 - c.lipschitz * c.eta * e1) / eb - alpha),
            alpha / e4 * (e3 / c.Q - c.Q * e1 - e2 / c.mu),
            et / e4 * ((e4 - c.eta * e1) / et - alpha),
        )


def make_certificate(c: ProblemConstants, eps) -> EpsilonCertificate:
    e1, e2, e3, e4 = (float(v) for v in eps)
    if min(e1, e2, e3, e4) <= 0:
        raise InfeasibleError("all eps components must be positive")
    eps_tilde = c.Q * (e1 + e3) + e2 / c.mu
    eps_bar = c.lipschitz * c.Q * (e1 + e3) + c.Q * e2
    cert = EpsilonCertificate((e1, e2, e3, e4), eps_tilde, eps_bar, c)
    if not e1 < min(cert.eps1_bounds()):
        raise InfeasibleError(f"eps1={e1} violates {cert.eps1_bounds()}")
    return cert


def find_epsilon(c: ProblemConstants) -> EpsilonCertificate:
    """A strictly feasible eps with ``eps2 = 1`` and 50% slack on every bound.

    ``eps3`` is chosen so that ``eps3/Q^2 - eps2/(mu Q) = eps2/(mu Q)``,
    ``eps1`` is half the tightest of its bounds, and ``eps4`` sits at twice
    ``eta * eps1`` (or equals ``eps1`` when ``eta`` is tiny).
    """
    if not c.sigma < 1:
        raise InfeasibleError("sigma must be < 1")
    e2 = 1.0
    e3 = 2.0 * c.Q * e2 / c.mu
    b_track = c.sigma_bar * e2 / (c.lipschitz * c.eta) if c.eta > 0 else math.inf
    b_opt = e3 / c.Q ** 2 - e2 / (c.mu * c.Q)
    e1 = 0.5 * min(b_track, b_opt)
    e4 = max(2.0 * c.eta, 1.0) * e1
    cert = make_certificate(c, (e1, e2, e3, e4))
    if not cert.slack() >= 0.05 or not all(np.isfinite(cert.eps)):
        raise InfeasibleError("constructed eps lacks the required slack")
    return cert


@dataclass(frozen=True)
class AdmissibleRegion:
    certificate: EpsilonCertificate
    alpha_max: float

    def beta_max(self, alpha: float) -> float:
        if not 0 < alpha < self.alpha_max:
            return 0.0
        return max(0.0, min(self.certificate.beta_bounds(alpha)))

    def certifies(self, alpha: float, beta: float) -> bool:
        return 0 < alpha < self.alpha_max and 0 <= beta < self.beta_max(alpha)


def stepsize_bounds(cert: EpsilonCertificate) -> AdmissibleRegion:
    alpha_max = min(cert.alpha_bounds())
    if not alpha_max > 0:
        raise EmptyRegionError("certificate leaves no admissible step size")
    return AdmissibleRegion(cert, alpha_max)


# --------------------------------------------------------------------------
# Perron-vector region
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PerronRegion:
    """``M(alpha, beta) = M0 + alpha M1 + beta M2`` with Perron-vector tests.

    ``M0`` has Perron root 1 (the optimality diagonal), so its own Perron
    vector is the unit vector on that coordinate and gives an empty linear
    region.  ``contains`` therefore tests a target rate
    ``1 - alpha/(rate_c Q)`` (``rate_c=None`` means plain contraction) against
    the Perron root of ``M(alpha, beta)`` itself, which is exact for
    nonnegative matrices.
    """

    constants: ProblemConstants
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    rho0: float
    eps0: np.ndarray
    rate_c: float | None

    def target(self, alpha: float) -> float:
        if self.rate_c is None:
            return 1.0
        return 1.0 - alpha / (self.rate_c * self.constants.Q)

    def matrix(self, alpha: float, beta: float) -> np.ndarray:
        return self.m0 + alpha * self.m1 + beta * self.m2

    def linear_region(self, eps=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows ``(a, b, r)`` of ``alpha*a + beta*b < r`` for a fixed ``eps``.

        Defaults to the Perron vector of ``M0``.
        """
        eps = self.eps0 if eps is None else np.asarray(eps, dtype=float)
        shift = eps / (self.rate_c * self.constants.Q) if self.rate_c else 0.0
        return self.m1 @ eps + shift, self.m2 @ eps, eps - self.m0 @ eps

    def contains(self, alpha: float, beta: float) -> bool:
        if not (alpha > 0 and beta >= 0 and alpha <= self.constants.mu / self.constants.lipschitz):
            return False
        m = self.matrix(alpha, beta)
        if np.any(m < 0):
            return False
        # some eps > 0 with M eps < r eps exists iff rho(M) < r; the margin can
        # sit near 1e-10, below what a componentwise Perron-vector test resolves
        return spectral_radius(m) < self.target(alpha)

    def beta_max(self, alpha: float, hi: float = 10.0, iters: int = 60) -> float:
        """Largest beta inside the region at ``alpha`` (rho is monotone in beta)."""
        if not self.contains(alpha, 0.0):
            return 0.0
        lo = 0.0
        while self.contains(alpha, hi):
            hi *= 2
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if self.contains(alpha, mid) else (lo, mid)
        return lo


def perron_bounds(c: ProblemConstants, rate_c: float | None = 2.0) -> PerronRegion:
    if not c.sigma < 1:
        raise InfeasibleError("sigma must be < 1")
    m0 = _matrix(c, 0.0, 0.0)
    m1 = _matrix(c, 1.0, 0.0) - m0
    m2 = _matrix(c, 0.0, 1.0) - m0
    return PerronRegion(c, m0, m1, m2, spectral_radius(m0), perron_vector(m0), rate_c)


# --------------------------------------------------------------------------
# trace verification
# --------------------------------------------------------------------------

def fit_rate(norms, burn_in: int = 20, floor: float = 1e-10) -> tuple[float, float, int, int]:
    """Least-squares fit of ``log ||e(t)||`` against ``t``.

    Uses rounds from ``burn_in`` up to (excluding) the first round at or
    below ``floor``.  Returns ``(rate, r_squared, start, stop)``.
    """
    norms = np.asarray(norms, dtype=float)
    below = np.flatnonzero(norms <= floor)
    stop = int(below[0]) if below.size else norms.size
    start = burn_in
    if stop - start < 2:
        raise InsufficientTraceError(f"only {max(stop - start, 0)} rounds in fit window [{start}, {stop})")
    t = np.arange(start, stop, dtype=float)
    y = np.log(norms[start:stop])
    slope, icpt = np.polyfit(t, y, 1)
    resid = y - (slope * t + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(slope)), r2, start, stop


@dataclass(frozen=True)
class ContractionReport:
    passed: bool
    first_violation: int | None
    max_excess: float
    rho_hat: float
    r_squared: float
    rho: float
    rate_checked: bool
    rate_ok: bool


def verify_contraction(trace, m: ContractionMatrix, certified: bool = False,
                       burn_in: int = 20, slack: float = SLACK, rate_slack: float = 0.02) -> ContractionReport:
    """Check ``e(t+1) <= M e(t) + slack`` on every consecutive pair of rounds.

    When ``certified`` (and the step is within ``mu/L``) the fitted rate must
    also satisfy ``rho_hat <= rho(M) + rate_slack``.
    """
    errs = np.array([r.errors.as_array() for r in trace.records])
    if errs.shape[0] < 2 or np.isnan(errs[:, 2]).any():
        raise InsufficientTraceError("need >= 2 rounds with optimality errors")
    lhs = errs[1:]
    rhs = errs[:-1] @ m.m.T + slack
    excess = lhs - rhs
    bad = np.flatnonzero(np.any(excess > 0, axis=1))
    norms = np.linalg.norm(errs, axis=1)
    try:
        rho_hat, r2, _, _ = fit_rate(norms, burn_in=burn_in)
    except InsufficientTraceError:
        rho_hat, r2 = math.nan, math.nan
    checked = certified and m.within_step_limit and not math.isnan(rho_hat)
    rate_ok = (rho_hat <= m.rho + rate_slack) if checked else True
    return ContractionReport(
        passed=bad.size == 0 and rate_ok,
        first_violation=int(bad[0]) if bad.size else None,
        max_excess=float(max(excess.max(), 0.0)),
        rho_hat=rho_hat,
        r_squared=r2,
        rho=m.rho,
        rate_checked=checked,
        rate_ok=rate_ok,
    )


def region_grid(c: ProblemConstants, alphas, betas, region: AdmissibleRegion | None = None):
    """Rows ``(alpha, beta, rho, certified)`` over a grid."""
    region = region or stepsize_bounds(find_epsilon(c))
    rows = []
    for a in alphas:
        for b in betas:
            rho = spectral_radius(_matrix(c, a, b))
            rows.append((float(a), float(b), rho, region.certifies(a, b)))
    return rows


def save_region_csv(path, rows) -> None:
    lines = ["alpha,beta,rho,certified"]
    lines += [f"{a:.17g},{b:.17g},{r:.17g},{int(ok)}" for a, b, r, ok in rows]
    Path(path).write_text("\n".join(lines) + "\n")
