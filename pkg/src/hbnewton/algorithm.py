"""Synchronous-round engine for heavy-ball Newton-type gradient tracking.

Per round, with ``W`` the consensus matrix and rows indexed by agent::

    X(t+1) = W X(t) - alpha D(t) + beta V(t)
    G(t+1) = grad F(X(t+1)) - grad F(X(t))
    Y(t+1) = W Y(t) + G(t+1)
    V(t+1) = X(t+1) - X(t)

``D`` rows are local Newton directions ``H_i(x_i)^{-1} y_i`` for the Newton
variants and plain ``y_i`` for the gradient-tracking variants.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, DimensionMismatch
from .graph import ConsensusMatrix
from .objective import GlobalObjective
from .theory import ErrorVector, error_vector

VARIANTS = ("newton_hb", "newton", "grad_track", "grad_track_hb")
DIVERGENCE_THRESHOLD = 1e12
TRACE_HEADER = "round,consensus_err,tracking_err,opt_err,momentum_norm,f_value,grad_norm"


@dataclass(frozen=True)
class AlgoConfig:
    alpha: float
    beta: float = 0.0
    variant: str = "newton_hb"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.variant in ("newton", "grad_track"):
            object.__setattr__(self, "beta", 0.0)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def newton(self) -> bool:
        return self.variant.startswith("newton")


@dataclass(frozen=True, eq=False)
class NetworkState:
    t: int
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    v: np.ndarray
    d: np.ndarray
    x_prev: np.ndarray
    grad: np.ndarray  # cached grad F(X(t)), reused for G(t+1)
    newton_directions: bool = True

    def __post_init__(self):
        for name in ("x", "y", "g", "v", "d", "x_prev", "grad"):
            getattr(self, name).setflags(write=False)


def _directions(objectives: GlobalObjective, x, y, newton: bool) -> np.ndarray:
    if newton:
        return objectives.stacked_hessian_solve(x, y)
    return y.copy()


def init(objectives: GlobalObjective, x0, cfg: AlgoConfig | None = None) -> NetworkState:
    """Round-zero state with ``Y(0) = G(0) = grad F(X(0))`` and ``V(0) = 0``."""
    x0 = np.array(x0, dtype=float)
    if x0.shape != (objectives.n, objectives.dim):
        raise DimensionMismatch(f"x0 must be {objectives.n} x {objectives.dim}, got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 has non-finite entries")
    newton = True if cfg is None else cfg.newton
    grad = objectives.stacked_gradient(x0)
    return NetworkState(
        t=0,
        x=x0,
        y=grad.copy(),
        g=grad.copy(),
        v=np.zeros_like(x0),
        d=_directions(objectives, x0, grad, newton),
        x_prev=x0.copy(),
        grad=grad,
        newton_directions=newton,
    )


def _weights(w) -> np.ndarray:
    return w.w if isinstance(w, ConsensusMatrix) else np.asarray(w, dtype=float)


def step(state: NetworkState, w, cfg: AlgoConfig, objectives: GlobalObjective) -> NetworkState:
    wm = _weights(w)
    d = state.d
    if state.newton_directions != cfg.newton:
        d = _directions(objectives, state.x, state.y, cfg.newton)
    x_new = wm @ state.x - cfg.alpha * d + cfg.beta * state.v
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError(f"non-finite iterate at round {state.t + 1}")
    grad_new = objectives.stacked_gradient(x_new)
    g_new = grad_new - state.grad
    y_new = wm @ state.y + g_new
    d_new = _directions(objectives, x_new, y_new, cfg.newton)
    if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(d_new))):
        raise DivergenceError(f"non-finite tracker or direction at round {state.t + 1}")
    return NetworkState(
        t=state.t + 1,
        x=x_new,
        y=y_new,
        g=g_new,
        v=x_new - state.x,
        d=d_new,
        x_prev=state.x,
        grad=grad_new,
        newton_directions=cfg.newton,
    )


@dataclass(frozen=True)
class Stop:
    grad_tol: float = 1e-10
    max_rounds: int = 1000
    gap_tol: float | None = None  # also stop once f(xbar) - f_star <= gap_tol

    def __post_init__(self):
        if not (self.grad_tol > 0 or self.max_rounds > 0):
            raise ValueError("need grad_tol > 0 or max_rounds > 0")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    errors: ErrorVector
    f_value: float
    grad_norm: float
    wall_time: float


@dataclass
class RunTrace:
    config: AlgoConfig
    records: list[RoundRecord] = field(default_factory=list)
    status: str = "running"
    final_state: NetworkState | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name in ("consensus", "tracking", "optimality", "momentum"):
            return np.array([getattr(r.errors, name) for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    def error_norms(self) -> np.ndarray:
        return np.array([r.errors.norm() for r in self.records])

    def first_round(self, predicate: Callable[[RoundRecord], bool]) -> int | None:
        for r in self.records:
            if predicate(r):
                return r.round
        return None

    def rounds_to_grad(self, tol: float) -> int | None:
        return self.first_round(lambda r: r.grad_norm <= tol)

    def rounds_to_gap(self, f_star: float, tol: float) -> int | None:
        return self.first_round(lambda r: r.f_value - f_star <= tol)

    def to_csv(self, path) -> None:
        lines = [TRACE_HEADER]
        for r in self.records:
            e = r.errors
            vals = (e.consensus, e.tracking, e.optimality, e.momentum, r.f_value, r.grad_norm)
            lines.append(f"{r.round}," + ",".join(f"{v:.17g}" for v in vals))
        Path(path).write_text("\n".join(lines) + "\n")


def load_trace_csv(path) -> dict[str, np.ndarray]:
    rows = Path(path).read_text().splitlines()
    header = rows[0].strip().split(",")
    if header != TRACE_HEADER.split(","):
        raise ValueError(f"unexpected trace header {rows[0]!r}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:] if ln.strip()])
    data = data.reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def run(
    state: NetworkState,
    w,
    cfg: AlgoConfig,
    objectives: GlobalObjective,
    stop: Stop,
    x_star=None,
    f_star: float | None = None,
) -> RunTrace:
    """Iterate until ``||grad f(xbar)|| <= grad_tol`` or ``max_rounds``.

    One record per round, starting with round ``state.t``.  Raises
    :class:`DivergenceError` (with the partial trace attached) when the
    gradient norm exceeds ``1e12`` or an iterate turns non-finite.
    """
    if stop.gap_tol is not None and f_star is None:
        raise ValueError("gap_tol needs f_star")
    trace = RunTrace(cfg)
    t0 = time.perf_counter()
    start = state.t
    while True:
        xbar = state.x.mean(axis=0)
        gnorm = float(np.linalg.norm(objectives.gradient(xbar)))
        fval = objectives.value(xbar)
        trace.records.append(RoundRecord(
            state.t, error_vector(state, x_star), fval, gnorm, time.perf_counter() - t0,
        ))
        trace.final_state = state
        if not math.isfinite(gnorm) or gnorm > DIVERGENCE_THRESHOLD:
            trace.status = "diverged"
            raise DivergenceError(f"gradient norm {gnorm:.3g} at round {state.t}", trace)
        if gnorm <= stop.grad_tol or (stop.gap_tol is not None and fval - f_star <= stop.gap_tol):
            trace.status = "converged"
            return trace
        if state.t - start >= stop.max_rounds:
            trace.status = "max_rounds"
            return trace
        try:
            state = step(state, w, cfg, objectives)
        except DivergenceError as exc:
            trace.status = "diverged"
            exc.trace = trace
            raise


def rounds_to_target(trace: RunTrace, stop: Stop, f_star: float | None = None) -> int:
    """First round meeting the stopping target, else ``max_rounds + 1``."""
    sentinel = stop.max_rounds + 1
    if trace.status != "converged":
        return sentinel
    if stop.gap_tol is not None:
        hit = trace.first_round(
            lambda r: r.grad_norm <= stop.grad_tol or r.f_value - f_star <= stop.gap_tol)
    else:
        hit = trace.rounds_to_grad(stop.grad_tol)
    return sentinel if hit is None else hit


def sweep(
    grid: Sequence[AlgoConfig],
    objectives: GlobalObjective,
    w,
    x0,
    stop: Stop,
    x_star=None,
    f_star: float | None = None,
) -> list[tuple[AlgoConfig, int]]:
    """Run every config from the same ``x0``; divergence scores the sentinel."""
    if not grid:
        raise ValueError("empty grid")
    out = []
    for cfg in grid:
        try:
            trace = run(init(objectives, x0, cfg), w, cfg, objectives, stop, x_star, f_star)
            rounds = rounds_to_target(trace, stop, f_star)
        except DivergenceError:
            rounds = stop.max_rounds + 1
        out.append((cfg, rounds))
    return out


def initial_point(n: int, p: int, kind: str = "zeros", seed: int = 0, scale: float = 1.0) -> np.ndarray:
    if kind == "zeros":
        return np.zeros((n, p))
    if kind == "gaussian":
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 3])
        return scale * rng.standard_normal((n, p))
    raise ValueError(f"unknown initialization {kind!r}")
