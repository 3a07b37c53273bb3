import pytest
from prefect.testing.utilities import prefect_test_harness

from core.steps.modules.latency import load_preset
from models.simulation import DeviceFleetConfig, SimulationConfig
from models.workload import DeviceProfile, WorkloadConfig


@pytest.fixture(scope="session")
def prefect_harness():
    with prefect_test_harness():
        yield


@pytest.fixture
def appendix_model():
    return load_preset("appendix-c")


@pytest.fixture
def workload():
    return WorkloadConfig()


@pytest.fixture
def profile():
    return DeviceProfile(draft_speed_s_d=50.0, network_rtt=0.04, alpha_base=0.72, k_max=8)


@pytest.fixture
def small_sim():
    """A short run: 12 devices for 20 simulated seconds."""
    return SimulationConfig(n_devices=12, duration_s=20.0, fleet=DeviceFleetConfig())


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
