"""Heavy-ball Newton-type gradient tracking for decentralized optimization."""

from .algorithm import AlgoConfig, NetworkState, RunTrace, Stop, init, initial_point, run, step, sweep
from .data import RawDataset, logistic_locals, load_delimited, pca_fit_transform, shuffle_partition, synthesize
from .errors import HBNewtonError
from .graph import ConsensusMatrix, Topology, gen_erdos_renyi, gen_regular, metropolis_weights
from .objective import GlobalObjective, LogisticLocal, QuadraticLocal, centralized_newton
from .theory import (
    ProblemConstants,
    contraction_matrix,
    find_epsilon,
    perron_bounds,
    spectral_radius,
    stepsize_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "AlgoConfig", "ConsensusMatrix", "GlobalObjective", "HBNewtonError", "LogisticLocal",
    "NetworkState", "ProblemConstants", "QuadraticLocal", "RawDataset", "RunTrace", "Stop",
    "Topology", "centralized_newton", "contraction_matrix", "find_epsilon", "gen_erdos_renyi",
    "gen_regular", "init", "initial_point", "load_delimited", "logistic_locals",
    "metropolis_weights", "pca_fit_transform", "perron_bounds", "run", "shuffle_partition",
    "spectral_radius", "step", "stepsize_bounds", "sweep", "synthesize",
]
