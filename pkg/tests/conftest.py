import numpy as np
import pytest

from realftrl.contexts import DiscreteContextModel
from realftrl.environment import Environment
from realftrl.policy import BoBWRealFTRL, ScheduleConstants


@pytest.fixture
def gap_model():
    return DiscreteContextModel([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def gap_theta():
    return np.array([[-0.2, -0.15], [0.2, 0.15]])


def make_consts(env, model, T):
    return ScheduleConstants(env.K, model.d, T, env.c_loss, model.c_x, model.lambda_min)


@pytest.fixture
def gap_setup(gap_model, gap_theta):
    def build(T, agent_cls=BoBWRealFTRL, **env_kw):
        env = Environment(gap_theta, gap_model, T, c_theta=0.5, **env_kw)
        return env, agent_cls(make_consts(env, gap_model, T))
    return build


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
