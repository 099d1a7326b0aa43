import warnings

import pytest
from hypothesis import HealthCheck, settings

from modelgeom.warp import ModelManifold, make_family

warnings.filterwarnings("ignore", message=".*TBB.*")

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SPLICED = dict(a=1.0, p=3.0, t0=1.0)


@pytest.fixture(scope="session")
def spliced():
    return make_family("spliced_exp_power", **SPLICED)


@pytest.fixture(scope="session")
def spliced_model(spliced):
    return ModelManifold(2, spliced)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.LINES):
            terminalreporter.write_line(acceptance_log.LINES[n])
