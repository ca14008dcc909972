import numpy as np
import pytest

from sspo.core_group import Trajectory, TrajectoryGroup
from sspo.gates import GateConfig
from sspo.policy import PolicyParams


@pytest.fixture
def cfg():
    return GateConfig(tau_pos=1.0, tau_neg=2.0, eps_low=0.2, eps_high=0.2)


def make_traj(tokens, logps, reward=0.0, prompt_id=0, bucket=0):
    return Trajectory(prompt_id, (0,), bucket, tuple(tokens), np.asarray(logps, float), reward)


def single_token_instance(rho, advantage=1.0):
    """One group, one sequence, one token whose ratio under zero logits is ``rho``.

    V=3, uniform current policy (log p = -ln 3); behaviour log-prob chosen so
    that the ratio is exactly ``rho``.
    """
    params = PolicyParams(3, 1, 1)
    old = -np.log(3.0) - np.log(rho)
    traj = make_traj([1], [old])
    group = TrajectoryGroup((traj,), np.array([advantage]))
    return [group], params


_criteria = {}



def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    n, title = marker.args
    failed = call.excinfo is not None
    prev = _criteria.get(n, (title, True))
    _criteria[n] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}")
