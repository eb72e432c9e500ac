"""Shared expensive fixtures: the Koch Mosco study and the 60-evaluation roof runs."""

import numpy as np
import pytest

from elastoshape.elasticity import MaterialModel
from elastoshape.functional import COMPLIANCE
from elastoshape.mosco import koch_study, mconvergence_indicators
from elastoshape.shapeopt import AdmissibleClassConfig, RoofLoads, optimize

ROOF_CFG = AdmissibleClassConfig.default_roof()
ROOF_MAT = MaterialModel.lame(1.0, 1.0)
ROOF_LOADS = RoofLoads(rho0=1.0, snow=1.0)
ROOF_THETA0 = np.full(ROOF_CFG.n_knots, 0.5)


def run_roof(budget=60, seed=0):
    return optimize(ROOF_CFG, ROOF_LOADS, ROOF_MAT, COMPLIANCE, ROOF_THETA0, budget=budget, seed=seed,
                    resolution=0.05)


@pytest.fixture(scope="session")
def roof_runs():
    return run_roof(), run_roof()


@pytest.fixture(scope="session")
def koch_report():
    return mconvergence_indicators(koch_study(), tol=1e-6)


@pytest.fixture(scope="session")
def acceptance_log(request):
    log = {}
    request.config._acceptance_log = log
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance_log", None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
