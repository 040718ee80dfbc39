"""End-to-end experiment harness: config file in, traces and summaries out."""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .algorithm import (
    AlgoConfig,
    DivergenceError,
    RunTrace,
    Stop,
    init,
    initial_point,
    load_trace_csv,
    rounds_to_target,
    run,
    sweep,
)
from .errors import ConfigError, InsufficientTraceError
from .graph import ConsensusMatrix, gen_erdos_renyi, gen_regular, metropolis_weights
from .objective import GlobalObjective, NewtonResult, centralized_newton
from .theory import (
    ProblemConstants,
    find_epsilon,
    fit_rate,
    region_grid,
    save_region_csv,
    spectral_radius,
    stepsize_bounds,
    _matrix,
)

OUTPUT_ENV = "HBNEWTON_OUTPUT_DIR"


@dataclass
class GraphSpec:
    kind: str = "regular"
    n: int = 20
    d: int = 14
    p: float = 0.3
    seed: int = 1


@dataclass
class DataSpec:
    source: str = "synthetic"
    m: int = 4000
    p: int = 10
    seed: int = 42
    separation: float = 2.0
    # per-feature std devs decay geometrically from scale_max to scale_min
    scale_max: float = 3.0
    scale_min: float = 0.3
    k_pca: int = 0  # 0 = no PCA
    standardize: bool = False
    path: str = ""
    label_column: int = -1
    positive_label: str = "2"
    partition_seed: int = 0


@dataclass
class AlgoSpec:
    name: str
    variant: str = "newton_hb"
    alpha: float = 0.1
    beta: float = 0.0

    def config(self) -> AlgoConfig:
        return AlgoConfig(self.alpha, self.beta, self.variant)


@dataclass
class ExperimentConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    data: DataSpec = field(default_factory=DataSpec)
    lam: float = 0.05
    algorithms: list[AlgoSpec] = field(default_factory=list)
    grad_tol: float = 1e-10
    max_rounds: int = 1000
    gap_tol: float | None = None
    newton_tol: float = 1e-12
    init_kind: str = "zeros"
    init_seed: int = 0
    init_scale: float = 1.0
    output_dir: str = "out"

    def stop(self) -> Stop:
        return Stop(self.grad_tol, self.max_rounds, self.gap_tol)

    def validate(self) -> "ExperimentConfig":
        if not self.lam > 0:
            raise ConfigError("objective.lambda", "must be > 0")
        if not self.grad_tol > 0:
            raise ConfigError("stopping.grad_tol", "must be > 0")
        if self.max_rounds < 0:
            raise ConfigError("stopping.max_rounds", "must be >= 0")
        if not self.algorithms:
            raise ConfigError("algorithm", "at least one algorithm entry is required")
        if self.graph.kind not in ("regular", "erdos_renyi"):
            raise ConfigError("graph.kind", f"unknown kind {self.graph.kind!r}")
        if self.data.source not in ("synthetic", "file"):
            raise ConfigError("data.source", f"unknown source {self.data.source!r}")
        if self.data.source == "file" and not self.data.path:
            raise ConfigError("data.path", "required when data.source = file")
        for a in self.algorithms:
            try:
                a.config()
            except ValueError as exc:
                raise ConfigError(f"algorithm.{a.name}", str(exc)) from None
        return self


_SIMPLE_KEYS = {
    "objective.lambda": "lam",
    "stopping.grad_tol": "grad_tol",
    "stopping.max_rounds": "max_rounds",
    "stopping.gap_tol": "gap_tol",
    "reference.newton_tol": "newton_tol",
    "init.kind": "init_kind",
    "init.seed": "init_seed",
    "init.scale": "init_scale",
    "output_dir": "output_dir",
}


def _coerce(key: str, raw: str, current):
    try:
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float) or current is None:
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``dotted.key = value`` lines (``#`` starts a comment).

    Algorithms are declared as ``algorithm.<name>.<field>``; their order is
    the order of first appearance.
    """
    cfg = ExperimentConfig()
    algos: dict[str, AlgoSpec] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if key in _SIMPLE_KEYS:
            attr = _SIMPLE_KEYS[key]
            setattr(cfg, attr, _coerce(key, raw, getattr(cfg, attr)))
        elif parts[0] in ("graph", "data") and len(parts) == 2:
            section = getattr(cfg, parts[0])
            if not hasattr(section, parts[1]):
                raise ConfigError(key, "unknown field")
            setattr(section, parts[1], _coerce(key, raw, getattr(section, parts[1])))
        elif parts[0] == "algorithm" and len(parts) == 3:
            spec = algos.setdefault(parts[1], AlgoSpec(parts[1]))
            if parts[2] not in ("variant", "alpha", "beta"):
                raise ConfigError(key, "unknown field")
            setattr(spec, parts[2], _coerce(key, raw, getattr(spec, parts[2])))
        else:
            raise ConfigError(key, "unknown key")
    cfg.algorithms = list(algos.values())
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# --------------------------------------------------------------------------
# problem construction
# --------------------------------------------------------------------------

@dataclass
class Problem:
    weights: ConsensusMatrix
    objective: GlobalObjective
    reference: NewtonResult
    x0: np.ndarray
    constants: ProblemConstants


def desk_scales(spec: DataSpec) -> np.ndarray:
    return np.geomspace(spec.scale_max, spec.scale_min, spec.p)


def build_problem(cfg: ExperimentConfig) -> Problem:
    g = cfg.graph
    topo = gen_regular(g.n, g.d, g.seed) if g.kind == "regular" else gen_erdos_renyi(g.n, g.p, g.seed)
    weights = metropolis_weights(topo)
    ds_spec = cfg.data
    if ds_spec.source == "synthetic":
        ds = data_mod.synthesize(ds_spec.m, ds_spec.p, ds_spec.seed, ds_spec.separation, desk_scales(ds_spec))
    else:
        ds = data_mod.load_delimited(ds_spec.path, ds_spec.label_column, ds_spec.positive_label)
    if ds_spec.k_pca:
        _, ds = data_mod.pca_fit_transform(ds, ds_spec.k_pca, ds_spec.standardize)
    part = data_mod.shuffle_partition(ds, g.n, ds_spec.partition_seed)
    objective = GlobalObjective(data_mod.logistic_locals(ds, part, cfg.lam))
    reference = centralized_newton(objective, np.zeros(objective.dim), tol=cfg.newton_tol)
    x0 = initial_point(g.n, objective.dim, cfg.init_kind, cfg.init_seed, cfg.init_scale)
    return Problem(weights, objective, reference, x0, ProblemConstants.from_problem(objective, weights))


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------

@dataclass
class SummaryRow:
    name: str
    variant: str
    alpha: float
    beta: float
    status: str
    rounds_to_tol: int
    rounds_to_gap: int | None
    final_gap: float
    rho_hat: float
    rho_m: float
    certified: bool | None
    wall_time: float


@dataclass
class ComparisonSummary:
    rows: list[SummaryRow]
    f_star: float
    constants: ProblemConstants
    traces: dict[str, RunTrace]

    @property
    def any_diverged(self) -> bool:
        return any(r.status == "diverged" for r in self.rows)

    def row(self, name: str) -> SummaryRow:
        return next(r for r in self.rows if r.name == name)

    def to_csv(self, path) -> None:
        # wall time is left out so repeated runs write identical bytes
        head = "algorithm,variant,alpha,beta,status,rounds_to_tol,rounds_to_gap,final_gap,rho_hat,rho_M,certified"
        lines = [head]
        for r in self.rows:
            cert = "" if r.certified is None else str(int(r.certified))
            gap = "" if r.rounds_to_gap is None else str(r.rounds_to_gap)
            lines.append(
                f"{r.name},{r.variant},{r.alpha:.17g},{r.beta:.17g},{r.status},{r.rounds_to_tol},{gap},"
                f"{r.final_gap:.17g},{r.rho_hat:.17g},{r.rho_m:.17g},{cert}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    def format(self) -> str:
        out = [f"{'algorithm':<16}{'status':<11}{'rounds':>7}{'f-f*':>12}{'rho_hat':>11}{'rho(M)':>12}{'time[s]':>9}"]
        for r in self.rows:
            # gap-based count when a gap target was configured
            rounds = r.rounds_to_tol if r.rounds_to_gap is None else r.rounds_to_gap
            out.append(f"{r.name:<16}{r.status:<11}{rounds:>7}{r.final_gap:>12.3e}"
                       f"{r.rho_hat:>11.5f}{r.rho_m:>12.5g}{r.wall_time:>9.3f}")
        return "\n".join(out)


def _rate(trace: RunTrace) -> float:
    try:
        return fit_rate(trace.error_norms(), burn_in=20)[0]
    except InsufficientTraceError:
        return math.nan


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def run_experiment(cfg: ExperimentConfig, problem: Problem | None = None) -> ComparisonSummary:
    cfg.validate()
    prob = problem or build_problem(cfg)
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    f_star = prob.reference.f_star
    stop = cfg.stop()
    c = prob.constants
    region = stepsize_bounds(find_epsilon(c))
    rows, traces, cert_lines = [], {}, []
    for spec in cfg.algorithms:
        algo = spec.config()
        try:
            trace = run(init(prob.objective, prob.x0, algo), prob.weights, algo, prob.objective,
                        stop, prob.reference.x_star, f_star)
        except DivergenceError as exc:
            trace = exc.trace
        traces[spec.name] = trace
        trace.to_csv(out_dir / f"trace_{_safe(spec.name)}.csv")
        last = trace.records[-1]
        rho_m, certified = math.nan, None
        if algo.newton:
            rho_m = spectral_radius(_matrix(c, algo.alpha, algo.beta))
            certified = region.certifies(algo.alpha, algo.beta)
            cert_lines.append((spec.name, algo.alpha, algo.beta, region.beta_max(algo.alpha), rho_m, certified))
        gap_hit = trace.rounds_to_gap(f_star, stop.gap_tol) if stop.gap_tol is not None else None
        hit = trace.rounds_to_grad(stop.grad_tol)
        rows.append(SummaryRow(
            name=spec.name,
            variant=algo.variant,
            alpha=algo.alpha,
            beta=algo.beta,
            status=trace.status,
            rounds_to_tol=stop.max_rounds + 1 if hit is None else hit,
            rounds_to_gap=(stop.max_rounds + 1 if gap_hit is None else gap_hit) if stop.gap_tol is not None else None,
            final_gap=last.f_value - f_star,
            rho_hat=_rate(trace),
            rho_m=rho_m,
            certified=certified,
            wall_time=last.wall_time,
        ))
    summary = ComparisonSummary(rows, f_star, c, traces)
    summary.to_csv(out_dir / "summary.csv")
    _write_certificate(out_dir / "certificate.csv", region, cert_lines)
    a_max = region.alpha_max
    save_region_csv(out_dir / "region.csv", region_grid(
        c, np.linspace(a_max / 20, 2 * a_max, 20),
        np.linspace(0.0, 2 * region.beta_max(a_max / 2), 20), region))
    return summary


def _write_certificate(path, region, entries) -> None:
    cert = region.certificate
    e1, e2, e3, e4 = cert.eps
    lines = ["algorithm,alpha,beta,eps1,eps2,eps3,eps4,alpha_max,beta_max_at_alpha,rho_M,certified"]
    for name, a, b, bmax, rho, ok in entries:
        vals = (a, b, e1, e2, e3, e4, region.alpha_max, bmax, rho)
        lines.append(f"{name}," + ",".join(f"{v:.17g}" for v in vals) + f",{int(ok)}")
    Path(path).write_text("\n".join(lines) + "\n")


def certificate_report(c: ProblemConstants, alpha: float, beta: float) -> tuple[str, bool]:
    """Human-readable certificate for ``(alpha, beta)``; returns ``(text, certified)``."""
    cert = find_epsilon(c)
    region = stepsize_bounds(cert)
    ok = region.certifies(alpha, beta)
    rho = spectral_radius(_matrix(c, alpha, beta))
    fmt = lambda xs: ", ".join(f"{x:.6g}" for x in xs)  # noqa: E731
    lines = [
        f"constants: mu={c.mu:.6g} L={c.lipschitz:.6g} Q={c.Q:.6g} sigma={c.sigma:.6g} eta={c.eta:.6g}",
        f"eps = ({fmt(cert.eps)})",
        f"eps_tilde = {cert.eps_tilde:.6g}   eps_bar = {cert.eps_bar:.6g}",
        f"alpha bounds: {fmt(cert.alpha_bounds())}  -> alpha_max = {region.alpha_max:.6g}",
        f"beta bounds at alpha={alpha:.6g}: {fmt(cert.beta_bounds(alpha))}",
        f"rho(M(alpha, beta)) = {rho:.12g}",
        f"verdict: {'CERTIFIED' if ok else 'UNCERTIFIED'}",
    ]
    if not ok:
        lines.append("note: UNCERTIFIED only means the sufficient conditions fail; the run may still converge.")
    return "\n".join(lines), ok


def rate_report(trace_path, floor: float = 1e-12, min_rounds: int = 30) -> tuple[float, float, int]:
    """Fit ``rho_hat`` on a trace CSV; returns ``(rho_hat, r_squared, burn_in)``."""
    cols = load_trace_csv(trace_path)
    errs = np.column_stack([cols[k] for k in ("consensus_err", "tracking_err", "opt_err", "momentum_norm")])
    errs = np.where(np.isnan(errs), 0.0, errs)
    norms = np.linalg.norm(errs, axis=1)
    below = np.flatnonzero(norms <= floor)
    usable = int(below[0]) if below.size else norms.size
    if usable < min_rounds:
        raise InsufficientTraceError(f"only {usable} rounds above the {floor:g} floor (need {min_rounds})")
    burn_in = min(20, usable - 10)
    rho_hat, r2, _, _ = fit_rate(norms, burn_in=burn_in, floor=floor)
    return rho_hat, r2, burn_in


def parse_grid(text: str) -> list[AlgoConfig]:
    """Lines of ``variant alpha [beta]`` (comma or whitespace separated)."""
    grid = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = [t for t in re.split(r"[,\s]+", line) if t]
        if tok[0] == "variant":
            continue
        try:
            grid.append(AlgoConfig(float(tok[1]), float(tok[2]) if len(tok) > 2 else 0.0, tok[0]))
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"grid line {lineno}", str(exc)) from None
    return grid


def run_sweep(cfg: ExperimentConfig, grid: list[AlgoConfig], problem: Problem | None = None):
    prob = problem or build_problem(cfg)
    results = sweep(grid, prob.objective, prob.weights, prob.x0, cfg.stop(),
                    prob.reference.x_star, prob.reference.f_star)
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["variant,alpha,beta,rounds"]
    lines += [f"{a.variant},{a.alpha:.17g},{a.beta:.17g},{r}" for a, r in results]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    return results


__all__ = [
    "AlgoSpec", "ComparisonSummary", "DataSpec", "ExperimentConfig", "GraphSpec", "Problem",
    "SummaryRow", "build_problem", "certificate_report", "load_config", "parse_config",
    "parse_grid", "rate_report", "rounds_to_target", "run_experiment", "run_sweep",
]
