import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from epictrl.agent import schedule_arrays  # noqa: E402
from epictrl.core import geometric_schedule  # noqa: E402
from epictrl.params import ModelParams  # noqa: E402

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")

TOY = dict(beta_w=0.3, beta_s=0.35, gamma=0.3, c=0.5, phi_plus=1.0, phi_minus=0.1, t_i=3, t_h=2,
           m_i=0.3, m_h=0.4, delta_a=0.5, delta_g=0.6, xi=2.0, e0=0.1, kappa=1e-3, lambda_bar=0.3)


def toy_params(T=4, **kw):
    return ModelParams(**{**TOY, "horizon": T, **kw})


@pytest.fixture
def toy():
    """Small instance with fast dynamics: (params, schedule, p, q)."""
    T = 4
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    p, q = schedule_arrays(sched, T)
    return prm, sched, p, q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""
    def record(n, passed, detail=""):
        line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.setdefault(n, []).append((passed, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        for _, line in _CRITERIA[n]:
            terminalreporter.write_line(line)
