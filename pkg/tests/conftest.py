import numpy as np
import pytest

from drivable.pipeline import PipelineConfig, detect
from drivable.synth import generate_scene, random_spec


@pytest.fixture(scope="session")
def scene():
    return generate_scene(random_spec(0, noise=0.02))


@pytest.fixture(scope="session")
def result(scene):
    return detect(scene.image, scene.cloud, scene.calib, PipelineConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
