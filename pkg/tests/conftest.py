import numpy as np
import pytest

from relaypower.channel import NetworkRealization


def random_net(rng, n, snr_db=10.0, tau=1.0):
    p = 10.0 ** (snr_db / 10.0)
    return NetworkRealization(
        rng.exponential(size=n), rng.exponential(size=n), p / (1.0 + tau), tau * p / (1.0 + tau)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_LINES = []


def report(name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
