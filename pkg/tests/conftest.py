import functools

import numpy as np
import pytest
from hypothesis import settings

from episync.geometry import Intrinsics, Pose
from episync.synth import ScenarioSpec, generate

settings.register_profile("episync", max_examples=60, deadline=None)
settings.load_profile("episync")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_bundle(**kw):
    return generate(ScenarioSpec(**kw))


@pytest.fixture
def bundle_factory():
    return cached_bundle


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rig(rng):
    """Two cameras looking at a common region around the origin."""
    out = []
    for _ in range(2):
        K = Intrinsics(rng.uniform(400, 1500), rng.uniform(400, 1500),
                       rng.uniform(200, 800), rng.uniform(200, 600), rng.uniform(-2, 2))
        center = rng.normal(size=3)
        center *= rng.uniform(3, 8) / np.linalg.norm(center)
        P = Pose.look_at(center, rng.normal(scale=0.3, size=3), up=rng.normal(size=3))
        out.append((K, P))
    return out
