import pytest
from hypothesis import HealthCheck, settings

from ergolab import default_system, load_calibration

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def anosov2d():
    return default_system("anosov2d")


@pytest.fixture(scope="session")
def compactified3d():
    return default_system("compactified3d")


@pytest.fixture(scope="session")
def control():
    return default_system("morse_smale_control")


@pytest.fixture(scope="session")
def skew_unbounded():
    return default_system("skew_unbounded")


@pytest.fixture(scope="session")
def cal():
    return load_calibration()
