import functools

import numpy as np
import pytest
from hypothesis import settings
from scipy.linalg import expm

from anosov_lab.orbit_engine import enumerate_ball
from anosov_lab.presets import get_preset
from anosov_lab.sl_geometry import act, as_sl

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def preset_ball(name: str, depth: int | None = None):
    """Cached ball of a built-in preset with its default cap and slack."""
    p = get_preset(name)
    depth = p.default_depth if depth is None else depth
    return enumerate_ball(p.presentation(), depth, distance_cap=p.distance_cap(depth), prune_slack=p.prune_slack)


def random_sl(rng, n, scale=1.0):
    """Exponential of a random traceless matrix: determinant one and bounded conditioning."""
    a = scale * rng.standard_normal((n, n))
    a -= np.trace(a) / n * np.eye(n)
    return as_sl(expm(a))


def random_point(rng, n, scale=0.7):
    return act(random_sl(rng, n, scale), np.eye(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
