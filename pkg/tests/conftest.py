import functools
from importlib import resources

import pytest

from biascomp.harness import Scenario, execute
from biascomp.ocv import OcvCurve, default_curve

SCENARIO_DIR = resources.files("biascomp") / "data" / "scenarios"


def linear_curve(a=0.5, b=3.0):
    return OcvCurve([b, a] + [0.0] * 11)


@functools.lru_cache(maxsize=None)
def _shipped(name: str, compare: bool):
    return execute(Scenario.load(SCENARIO_DIR / f"{name}.json"), compare=compare)


@pytest.fixture(scope="session")
def ocv():
    return default_curve()


@pytest.fixture
def line():
    return linear_curve()


@pytest.fixture(scope="session")
def shipped():
    """Run a shipped scenario once per session (always with the baseline)."""
    def get(name):
        return _shipped(name, True)
    return get
