import numpy as np
import pytest

from hbnewton.experiment import ExperimentConfig, GraphSpec, build_problem


def desk_problem(kind="regular", seed=1, data_seed=42, init_kind="zeros"):
    cfg = ExperimentConfig(graph=GraphSpec(kind=kind, seed=seed), init_kind=init_kind)
    cfg.data.seed = data_seed
    return build_problem(cfg)


@pytest.fixture(scope="session")
def desk():
    return desk_problem()


@pytest.fixture(scope="session")
def desk_er():
    return desk_problem("erdos_renyi")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
