import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from speedplan.generators import reference_instance, reference_vehicle, unreachable_instance

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def vehicle():
    return reference_vehicle()


@pytest.fixture
def ref():
    return reference_instance()


@pytest.fixture
def unreachable():
    return unreachable_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def acceptance_report(request, capsys):
    """Callable ``(k, ok, detail)`` printing one PASS/FAIL line per criterion.

    Lines are printed immediately (visible with ``-s``) and repeated in the
    terminal summary so they always appear in ``pytest -v`` output.
    """
    config = request.config

    def report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        config.stash.setdefault(_ACCEPTANCE, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
