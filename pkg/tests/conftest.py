"""Shared fixtures: planned demonstration cases and their closed-loop runs.

Planning and closed-loop simulation are the expensive pieces, so each case
is planned and flown once per session and reused across test modules.
"""

from dataclasses import dataclass

import pytest

from flapkit.planning import PlanOptions, PlanReport, case_library, plan
from flapkit.simulate import ClosedLoopResult, run_closed_loop
from flapkit.trajectory import ObjectiveWeights, PiecewiseTrajectory


@dataclass
class PlannedCase:
    name: str
    cons: object
    opts: PlanOptions
    weights: ObjectiveWeights
    traj: PiecewiseTrajectory
    report: PlanReport


def _plan_case(name: str) -> PlannedCase:
    cons, opts, weights = case_library(name)
    traj, report = plan(cons, weights, opts)
    return PlannedCase(name, cons, opts, weights, traj, report)


@pytest.fixture(scope="session")
def case_a() -> PlannedCase:
    return _plan_case("a")


@pytest.fixture(scope="session")
def case_b() -> PlannedCase:
    return _plan_case("b")


@pytest.fixture(scope="session")
def case_c() -> PlannedCase:
    return _plan_case("c")


@pytest.fixture(scope="session")
def case_line() -> PlannedCase:
    return _plan_case("line")


@pytest.fixture(scope="session")
def run_a(case_a) -> ClosedLoopResult:
    return run_closed_loop(case_a.traj, model="vertical")


@pytest.fixture(scope="session")
def run_b(case_b) -> ClosedLoopResult:
    return run_closed_loop(case_b.traj, model="vertical")


@pytest.fixture(scope="session")
def run_c(case_c) -> ClosedLoopResult:
    return run_closed_loop(case_c.traj, model="vertical")


@pytest.fixture(scope="session")
def run_line(case_line) -> ClosedLoopResult:
    return run_closed_loop(case_line.traj, model="vertical")
