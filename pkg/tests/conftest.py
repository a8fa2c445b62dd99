import pytest

from theatresched.baseline import solve_baseline
from theatresched.capacity import compute_table
from theatresched.constructive import construct
from theatresched.generator import GeneratorConfig, generate, scaled_config


@pytest.fixture(scope="session")
def full():
    """Default full-scale instance with its capacities, baseline and constructive schedule."""
    inst = generate(GeneratorConfig())
    caps = compute_table(inst)
    plan = solve_baseline(inst, caps)
    return inst, caps, plan, construct(inst, caps, plan)


@pytest.fixture(scope="session")
def small():
    """A fifth of the default hospital: quick but structurally identical."""
    inst = generate(scaled_config(0.2, samples=10**5))
    caps = compute_table(inst, samples=10**5)
    plan = solve_baseline(inst, caps)
    return inst, caps, plan, construct(inst, caps, plan)


VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
