import contextlib

import numpy as np
import pytest

from cqmlab import Free, PhysicalConstants, build_grid, gaussian_packet, propagate

ACCEPTANCE_LINES = []


class _Record:
    def __init__(self):
        self.details = []

    def detail(self, text):
        self.details.append(text)


@pytest.fixture
def acceptance():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def criterion(number, title):
        rec = _Record()
        ok = False
        try:
            yield rec
            ok = True
        finally:
            tag = "PASS" if ok else "FAIL"
            line = f"[{tag}] criterion {number:>2}: {title}"
            if rec.details:
                line += " | " + "; ".join(rec.details)
            ACCEPTANCE_LINES.append(line)
            print(line)

    return criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def consts():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(-10.0, 10.0, 256)


@pytest.fixture(scope="session")
def free_history(small_grid, consts):
    """Free Gaussian (sigma0=1, centered) to t=1, snapshots every 0.01."""
    psi0 = gaussian_packet(small_grid, 0.0, 1.0)
    return propagate(psi0, Free(), consts, 1.0, 1e-3, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
