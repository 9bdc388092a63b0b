import pytest
from hypothesis import HealthCheck, settings

from anchorconn.geometry import BundleSpec
from anchorconn.sode import SodeSpec

settings.register_profile(
    "det",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("det")


@pytest.fixture
def f1() -> BundleSpec:
    return BundleSpec.from_strings(1, 1, 1, [["1"]], [["2 + 3*y1"]])


@pytest.fixture
def f2() -> BundleSpec:
    return BundleSpec.from_strings(1, 1, 1, [["1"]], [["y1^2"]])


@pytest.fixture
def f3() -> SodeSpec:
    return SodeSpec(1, ("1 + 2*v1 + 3*v1^2",))


@pytest.fixture
def f4() -> BundleSpec:
    return BundleSpec.from_strings(1, 2, 1, [["1", "0"]], [["y1", "1"]])
