import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from growthspec import build_root_system

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GROUPS = ("sl2", "sl3", "sl2xsl2", "sl4", "sl2xsl3")


@pytest.fixture(params=GROUPS)
def rs(request):
    return build_root_system(request.param)


@pytest.fixture
def sl2():
    return build_root_system("sl2")


@pytest.fixture
def sl3():
    return build_root_system("sl3")


@pytest.fixture
def sl2x2():
    return build_root_system("sl2xsl2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
