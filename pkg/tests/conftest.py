import math

import numpy as np
import pytest

from trajdp import available
from trajdp.geo import Trajectory

BACKENDS = available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def key(cx, cy, grid=512):
    return cx * grid + cy


def traj(keys, grid=512, oid="t", times=None):
    keys = list(keys)
    if times is None:
        times = [float(i) for i in range(len(keys))]
    return Trajectory(oid, keys, times, grid)


def random_dataset(rng, n_traj, max_len, grid=512, spread=None):
    """Random walks on the grid; small spreads produce repeated cells and ties."""
    spread = spread or grid
    out = []
    for i in range(n_traj):
        n = int(rng.integers(1, max_len + 1))
        start = rng.integers(0, spread, size=2)
        steps = rng.integers(-3, 4, size=(n, 2))
        xy = np.clip(start + np.cumsum(steps, axis=0), 0, spread - 1)
        out.append(Trajectory(f"o{i}", xy[:, 0] * grid + xy[:, 1], np.arange(n, dtype=float),
                              grid))
    return out


# --- independent geometry ------------------------------------------------------

def dist_point_segment(q, a, b):
    """Closest-point distance by projection onto the segment."""
    (qx, qy), (ax, ay), (bx, by) = q, a, b
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    if ll == 0:
        return math.hypot(qx - ax, qy - ay)
    t = max(0.0, min(1.0, ((qx - ax) * dx + (qy - ay) * dy) / ll))
    return math.hypot(qx - (ax + t * dx), qy - (ay + t * dy))


def center(k, grid=512):
    return ((k // grid + 0.5) / grid, (k % grid + 0.5) / grid)
