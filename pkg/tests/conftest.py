import math

import numpy as np
import pytest
from hypothesis import strategies as st

from fuseloc import simworld as sw
from fuseloc.evaluation import build_map_database
from fuseloc.geometry import PointCloud
from fuseloc.range_image import ProjectionConfig, RangeImage


@pytest.fixture(scope="session")
def worlds():
    return sw.preset_worlds()


class Bench:
    """A preset world with its survey, queries and in-memory map, built once per session."""

    def __init__(self, world):
        self.world = world
        self.survey = world.survey(0)
        self.queries = world.queries(1)
        self.db = build_map_database(self.survey, world.lidar.projection)


@pytest.fixture(scope="session")
def benches(worlds):
    return {name: Bench(w) for name, w in worlds.items()}


@pytest.fixture(scope="session")
def corridor_world():
    """Straight 4 m wide corridor with a few wall features, for registration tests."""
    walls = [
        [-30.0, -2.0, 30.0, -2.0],
        [-30.0, 2.0, 30.0, 2.0],
        [-30.0, -2.0, -30.0, 2.0],
        [30.0, -2.0, 30.0, 2.0],
        [3.0, 2.0, 3.0, 1.4], [3.0, 1.4, 4.2, 1.4], [4.2, 1.4, 4.2, 2.0],
        [-5.0, -2.0, -5.0, -1.5], [-5.0, -1.5, -6.0, -1.5], [-6.0, -1.5, -6.0, -2.0],
        [9.0, -2.0, 9.5, -1.2], [9.5, -1.2, 10.5, -1.6], [10.5, -1.6, 11.0, -2.0],
    ]
    env = sw.Environment(np.array(walls), 3.0, 0.0, 3.0, (-31.0, -3.0, 31.0, 3.0))
    return env, sw.LidarSpec(ProjectionConfig.vlp16(max_range=40.0), 0.01, 0.7)


def smooth_image(cfg: ProjectionConfig, seed: int) -> RangeImage:
    """Low-frequency random depth field: a handful of smooth harmonics over yaw and elevation."""
    rng = np.random.default_rng(seed)
    yaw = cfg.column_yaws()[None, :]
    el = cfg.row_elevations()[:, None]
    depth = np.full((cfg.height, cfg.width), 8.0)
    for k in range(1, 6):
        depth = depth + rng.uniform(0.2, 1.0) / k * np.cos(k * yaw + rng.uniform(0, 2 * math.pi))
    depth = depth + 2.0 * el
    return RangeImage(depth, cfg)


def random_image(cfg: ProjectionConfig, seed: int, holes: float = 0.1) -> RangeImage:
    rng = np.random.default_rng(seed)
    depth = rng.uniform(1.0, 30.0, size=(cfg.height, cfg.width))
    depth[rng.random(depth.shape) < holes] = np.nan
    return RangeImage(depth, cfg)


def random_cloud(seed: int, n: int = 500, spread: float = 10.0) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(0.0, spread, size=(n, 3)))


rssi_values = st.integers(min_value=-99, max_value=-1).map(float)
mac_values = st.integers(min_value=1, max_value=(1 << 48) - 1)


@st.composite
def raw_scans(draw, max_aps: int = 40, mac_pool: int | None = None):
    if mac_pool is None:
        macs = draw(st.lists(mac_values, max_size=max_aps, unique=True))
    else:
        macs = draw(st.lists(st.integers(1, mac_pool), max_size=max_aps, unique=True))
    return [(m, draw(rssi_values)) for m in macs]


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"CRITERION {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
