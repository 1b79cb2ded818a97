import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from risuplink.channel import dbm_to_watt, table_config  # noqa: E402

SIGMA2 = dbm_to_watt(-104.0)


def correlated_config(M=16, N=16, K=4, rho_db=30.0, d_ris=0.25, **kw):
    return table_config(M=M, N=N, K=K, epsilon=math.inf, correlated=True, d_ris=d_ris, sigma_e2=SIGMA2 * 10 ** (rho_db / 10), **kw)


@pytest.fixture
def small_independent():
    return table_config(M=8, N=9, K=3)


@pytest.fixture
def small_correlated():
    return correlated_config(M=6, N=9, K=3)


# acceptance report and session-wide structural check ---------------------------------

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# every RateBreakdown built during the session must satisfy signal == noise^2 bit for bit
import numpy as np  # noqa: E402

import risuplink.rate_analytic as _ra  # noqa: E402

STRUCTURE_TALLY = {"checked": 0, "violations": 0}
_breakdown_init = _ra.RateBreakdown.__init__


def _checked_init(self, *args, **kwargs):
    _breakdown_init(self, *args, **kwargs)
    STRUCTURE_TALLY["checked"] += 1
    if not np.array_equal(self.signal, self.noise**2):
        STRUCTURE_TALLY["violations"] += 1


_ra.RateBreakdown.__init__ = _checked_init


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    t = STRUCTURE_TALLY
    terminalreporter.write_line(f"signal == noise^2 checked on {t['checked']} rate evaluations, {t['violations']} violations")


def pytest_sessionfinish(session, exitstatus):
    if STRUCTURE_TALLY["violations"] and exitstatus == 0:
        session.exitstatus = 1
