import warnings

import pytest

from mitlnav.scenario import load_scenario


def pytest_configure(config):
    # SLSQP nudges iterates marginally outside the bounds; harmless here
    warnings.filterwarnings("ignore", message="Values in x were outside bounds")


@pytest.fixture(scope="session")
def scenario():
    return load_scenario("paper_s5")


@pytest.fixture(scope="session")
def gains(scenario):
    return scenario.design()


@pytest.fixture(scope="session")
def config(scenario):
    return scenario.fhocp_config()
