import numpy as np
import pytest

from glsim.gft import TrainingSet, fit_surrogate
from glsim.netmodel import PerturbationProcess
from glsim.swing import load_bus_system, simulate_swing

BUS39_RANK_TOL = 3e-4  # rank tolerance of the shipped 39-bus experiment profile


@pytest.fixture(scope="session")
def bus39():
    from glsim.experiments import default_bus_data_path

    return load_bus_system(default_bus_data_path())


def _startup_draw(topo, params, seed):
    rng = np.random.default_rng(seed)
    amp = np.zeros((1, topo.node_count))
    loads = list(topo.load_nodes)
    amp[0, loads] = rng.normal(0.0, np.sqrt(params.load_var))
    return PerturbationProcess(np.array([0]), amp, target_nodes=topo.load_nodes)


@pytest.fixture(scope="session")
def training39(bus39):
    """Four clean ringdown runs from random initial load draws."""
    topo, params = bus39
    return tuple(
        simulate_swing(topo, params, _startup_draw(topo, params, seed), 5000, 1e-3)
        for seed in (101, 102, 103, 104)
    )


@pytest.fixture(scope="session")
def surrogate39(training39):
    return fit_surrogate(TrainingSet(training39, mode="raw"), BUS39_RANK_TOL)
