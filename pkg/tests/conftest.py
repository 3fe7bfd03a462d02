import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridlin.fixtures import appendix_b, chain, synthetic_123  # noqa: E402
from gridlin.loads import loads_from_spec  # noqa: E402
from gridlin.network import build_network  # noqa: E402
from gridlin.simulation import TimeSeries  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ab_fixture():
    return appendix_b()


@pytest.fixture(scope="session")
def ab_net(ab_fixture):
    return build_network(ab_fixture.network)


@pytest.fixture(scope="session")
def ab_loads(ab_fixture, ab_net):
    return loads_from_spec(ab_net, ab_fixture.network["loads"])


@pytest.fixture(scope="session")
def chain_fixture():
    return chain(4, "a")


@pytest.fixture(scope="session")
def chain_net(chain_fixture):
    return build_network(chain_fixture.network)


@pytest.fixture(scope="session")
def chain_loads(chain_fixture, chain_net):
    return loads_from_spec(chain_net, chain_fixture.network["loads"])


@pytest.fixture(scope="session")
def s123_fixture():
    return synthetic_123(7)


@pytest.fixture(scope="session")
def s123_net(s123_fixture):
    return build_network(s123_fixture.network)


@pytest.fixture(scope="session")
def s123_series(s123_fixture, s123_net):
    return TimeSeries.from_records(s123_net, s123_fixture.profile, s123_fixture.dt)
