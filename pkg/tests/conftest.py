import numpy as np
import pytest

from interacting_bs import MarketParams, OptionContract

# per-day magnitudes of the reference contract: sigma=0.0046, r=0.00019
SIGMA = 0.0046
R = 0.00019
MU = 0.0005
REF_FIT = (0.1242, -0.2159, -0.1162)


@pytest.fixture
def params():
    return MarketParams(r=R, mu=MU, sigma=SIGMA)


@pytest.fixture
def atm62():
    return OptionContract(strike=100.0, maturity_T=62.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
