import numpy as np
import pytest

from grassnav.scenario import Scenario

# one line per top-level requirement, filled in by test_acceptance.criterion
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def base_scenario_dict(**overrides) -> dict:
    d = {
        "name": "test",
        "seed": 7,
        "world": {
            "bounds": [-50, -50, 50, 50],
            "landmark_zones": [],
        },
    }
    d.update(overrides)
    return d


@pytest.fixture
def scenario() -> Scenario:
    return Scenario.from_dict(base_scenario_dict())


def random_pose(rng: np.random.Generator):
    from grassnav.geometry import Pose2
    return Pose2(rng.uniform(-10, 10), rng.uniform(-10, 10),
                 rng.uniform(-np.pi, np.pi))


def pose_to_matrix(p) -> np.ndarray:
    c, s = np.cos(p.theta), np.sin(p.theta)
    return np.array([[c, -s, p.x], [s, c, p.y], [0, 0, 1]])


def matrix_to_pose(m: np.ndarray):
    from grassnav.geometry import Pose2
    return Pose2(m[0, 2], m[1, 2], np.arctan2(m[1, 0], m[0, 0]))
