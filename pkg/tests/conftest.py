import random
import sys

import pytest

from nodmt.gridworld import AgentState, CompletionCondition, GenerationParams, TaskInstruction, generate_environment
from nodmt.planners import shortest_path_cost


def sample_case(seed: int, width: int = 10, height: int = 10, density: float = 0.2, min_cost: int = 4):
    """A solvable (env, task, start, oracle cost) drawn deterministically from ``seed``."""
    params = GenerationParams(width, height, density, 4)
    for attempt in range(100):
        env = generate_environment(seed * 1000 + attempt, params)
        rng = random.Random(seed * 1000 + attempt)
        target = sorted(env.categories)[rng.randrange(len(env.categories))]
        cells = [c for c in env.free_cells() if c not in env.object_at]
        start = AgentState(rng.choice(cells), rng.choice((0, 90, 180, 270)))
        task = TaskInstruction(target, CompletionCondition())
        cost = shortest_path_cost(env, start, task)
        if cost is not None and cost >= min_cost:
            return env, task, start, cost
    raise RuntimeError("no solvable case")


@pytest.fixture
def case_factory():
    return sample_case


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
