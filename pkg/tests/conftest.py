import numpy as np
import pytest

from patchplane.synth import default_scene, make_scene
from patchplane.geometry import Intrinsics


@pytest.fixture(scope="session")
def scene():
    return make_scene(default_scene(seed=0))


@pytest.fixture
def k100():
    return Intrinsics(100.0, 100.0, 96.0, 72.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
