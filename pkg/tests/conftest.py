from pathlib import Path

import numpy as np
import pytest

from weightcdr.containers import ContainerFormat, ModelContainer
from weightcdr.rng import uniform_f32

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        status = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE [{marker.args[0]}]: {status}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def random_container(
    seed: int,
    sizes: list[int],
    fmt: ContainerFormat = ContainerFormat.SAFETENSORS,
    prefix: str = "t",
) -> ModelContainer:
    arrays = {
        f"{prefix}{i}": uniform_f32(seed ^ (i + 1), n) for i, n in enumerate(sizes)
    }
    return ModelContainer.from_arrays(arrays, fmt)


@pytest.fixture
def small_carrier() -> ModelContainer:
    return random_container(99, [600, 1200, 2600])


def normal_f32(seed: int, n: int) -> np.ndarray:
    """Random float32 values guaranteed normal (no zeros or subnormals)."""
    x = uniform_f32(seed, n, low=0.25, high=2.0)
    sign = np.where(uniform_f32(seed ^ 0x5A5A, n) < 0, -1.0, 1.0).astype(np.float32)
    return x * sign
