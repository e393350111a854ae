import numpy as np
import pytest

from gravjet.flux_algebra import DownstreamState, JetParameters
from gravjet.geometry import build_grid, build_nozzle, truncate

CANON = JetParameters(3.0, 1.0, 1.0, 2.0, 3.0)


@pytest.fixture(scope="session")
def jet():
    return CANON


@pytest.fixture(scope="session")
def canon_domain():
    return truncate(build_nozzle(1.0, 2.0, 3.0), 6.0)


@pytest.fixture(scope="session")
def coarse_grid(canon_domain):
    return build_grid(canon_domain, 1 / 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def state(lam, q1, jet=CANON):
    return DownstreamState.from_params(lam, q1, jet)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {text}")
