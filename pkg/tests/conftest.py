import numpy as np
import pytest

from consensus_ioc.dynamics import GoalSpec, simulate
from consensus_ioc.graph import build_graph
from consensus_ioc.ioc import IocProblem
from consensus_ioc.policy import SGrid, linear_policy, quadratic_policy

CASE_EDGES = [(1, 3), (2, 5), (3, 8), (4, 5), (4, 6), (6, 7), (7, 8)]

SMALL_EDGES = {
    2: [[(1, 2)], [(1, 2), (2, 1)]],
    3: [[(1, 2), (2, 3)], [(1, 2), (2, 3), (3, 1)], [(1, 3), (2, 3), (3, 1)]],
}


def random_instance(rng, N=None, d=None, tf=1.0, dt=0.01, M=48, gain_k=1.0):
    """Small random IOC problem: demo under the quadratic policy, nominal linear."""
    N = N or int(rng.choice([2, 3]))
    d = d or int(rng.choice([1, 2]))
    edges = SMALL_EDGES[N][rng.integers(len(SMALL_EDGES[N]))]
    g = build_graph(N, edges, d)
    grid = SGrid(0.15, 3.02, M)
    x0 = rng.uniform(-2, 2, (N, d))
    goals = rng.uniform(-2, 2, (N, d))
    spec = GoalSpec(goals, gain_k)
    demo = simulate(x0.ravel(), quadratic_policy(grid, 0.3), g, spec, 0.0, tf, dt)
    return IocProblem(g, demo, spec, linear_policy(grid, 0.3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def case_graph():
    return build_graph(8, CASE_EDGES, 2)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
