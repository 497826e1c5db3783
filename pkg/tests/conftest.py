import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class Sample:
    """Minimal labeled input accepted by every engine (duck-typed ``state``/``label``)."""

    def __init__(self, state, label):
        self.state = np.asarray(state, dtype=complex)
        self.label = label


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=int):
        r = RESULTS[key]
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {key:>2} {r.name} measured={r.measured} ({r.seconds}s)")
