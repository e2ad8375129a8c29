"""Coordinates, discrete locations and segment geometry.

Points are normalised into the unit square and snapped to a finest grid of
``grid x grid`` cells. A location is identified by the integer key
``cell_x * grid + cell_y``, so sorting keys sorts by (cell_x, cell_y).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels

DEFAULT_GRID = 512


@dataclass(frozen=True)
class RawSample:
    object_id: str
    timestamp: float
    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"coordinates out of range: lon={self.lon} lat={self.lat}")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass(frozen=True)
class BBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError(f"degenerate bbox {self}")

    @classmethod
    def enclosing(cls, xs, ys, pad=1e-9):
        """Smallest box around the points, widened when an axis is flat."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.size == 0:
            raise ValueError("no points")
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 - x0 <= 0.0:
            x0, x1 = x0 - max(pad, abs(x0) * 1e-9), x1 + max(pad, abs(x1) * 1e-9)
        if y1 - y0 <= 0.0:
            y0, y1 = y0 - max(pad, abs(y0) * 1e-9), y1 + max(pad, abs(y1) * 1e-9)
        return cls(x0, y0, x1, y1)

    def contains(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (x >= self.min_x) & (x <= self.max_x) & (y >= self.min_y) & (y <= self.max_y)

    def to_unit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return ((x - self.min_x) / (self.max_x - self.min_x),
                (y - self.min_y) / (self.max_y - self.min_y))

    def from_unit(self, u, v):
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        return (self.min_x + u * (self.max_x - self.min_x),
                self.min_y + v * (self.max_y - self.min_y))


@dataclass(frozen=True)
class Location:
    cell_x: int
    cell_y: int
    grid: int = field(default=DEFAULT_GRID, compare=False)

    def __post_init__(self):
        if not (0 <= self.cell_x < self.grid and 0 <= self.cell_y < self.grid):
            raise ValueError(f"cell ({self.cell_x},{self.cell_y}) outside grid {self.grid}")

    @property
    def key(self):
        return self.cell_x * self.grid + self.cell_y

    @property
    def center(self):
        return ((self.cell_x + 0.5) / self.grid, (self.cell_y + 0.5) / self.grid)

    @classmethod
    def from_key(cls, key, grid=DEFAULT_GRID):
        key = int(key)
        return cls(key // grid, key % grid, grid)


@dataclass(frozen=True)
class TrajPoint:
    location: Location
    timestamp: float


@dataclass(frozen=True)
class Segment:
    a: tuple
    b: tuple
    trajectory_id: int
    index: int


class Trajectory:
    """Time-ordered sequence of location keys.

    Stored as two parallel arrays; treat instances as immutable and build a
    new one for every edit.
    """

    __slots__ = ("object_id", "locs", "times", "grid")

    def __init__(self, object_id, locs, times, grid=DEFAULT_GRID):
        self.object_id = object_id
        self.locs = np.asarray(locs, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.float64)
        self.grid = int(grid)
        if self.locs.ndim != 1 or self.locs.shape != self.times.shape:
            raise ValueError("locs and times must be 1-d arrays of equal length")

    def __len__(self):
        return int(self.locs.shape[0])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.object_id == other.object_id and self.grid == other.grid
                and np.array_equal(self.locs, other.locs)
                and np.array_equal(self.times, other.times))

    def __repr__(self):
        return f"Trajectory({self.object_id!r}, n={len(self)})"

    @property
    def points(self):
        g = self.grid
        return [TrajPoint(Location.from_key(k, g), float(t))
                for k, t in zip(self.locs.tolist(), self.times.tolist())]

    def xy(self):
        return center_xy(self.locs, self.grid)

    def replace(self, locs, times):
        return Trajectory(self.object_id, locs, times, self.grid)


Dataset = list  # list of Trajectory, in dataset order


def normalize(samples: Sequence[RawSample], bbox: BBox | None = None):
    """Map samples into the unit square.

    Returns ``(points, kept)``: an (n_kept, 2) array in input order and a
    boolean mask over ``samples``. Samples outside a supplied bbox are
    dropped; ``(~kept).sum()`` is the rejected count.
    """
    lon = np.fromiter((s.lon for s in samples), dtype=np.float64, count=len(samples))
    lat = np.fromiter((s.lat for s in samples), dtype=np.float64, count=len(samples))
    if bbox is None:
        bbox = BBox.enclosing(lon, lat)
    kept = bbox.contains(lon, lat)
    u, v = bbox.to_unit(lon[kept], lat[kept])
    return np.column_stack([u, v]), kept


def snap_keys(x, y, grid=DEFAULT_GRID):
    """Vectorised snap of unit-square coordinates to location keys."""
    cx = np.clip(np.floor(np.asarray(x, dtype=np.float64) * grid), 0, grid - 1).astype(np.int64)
    cy = np.clip(np.floor(np.asarray(y, dtype=np.float64) * grid), 0, grid - 1).astype(np.int64)
    return cx * grid + cy


def snap_to_location(p, grid=DEFAULT_GRID):
    if grid < 1:
        raise ValueError("grid must be >= 1")
    return Location(kernels.finest_cell(float(p[0]), grid),
                    kernels.finest_cell(float(p[1]), grid), grid)


def center_xy(keys, grid=DEFAULT_GRID):
    """Cell-centre coordinates of location keys, as two float arrays."""
    cx, cy = np.divmod(np.asarray(keys, dtype=np.int64), grid)
    return (cx + 0.5) / grid, (cy + 0.5) / grid


def point_segment_distance(q, s: Segment):
    return kernels.seg_dist(float(q[0]), float(q[1]),
                            float(s.a[0]), float(s.a[1]), float(s.b[0]), float(s.b[1]))


def segments_of(traj: Trajectory, trajectory_id=0):
    if len(traj) < 2:
        return []
    x, y = traj.xy()
    xs, ys = x.tolist(), y.tolist()
    return [Segment((xs[i], ys[i]), (xs[i + 1], ys[i + 1]), trajectory_id, i)
            for i in range(len(xs) - 1)]


def dataset_keys(dataset: Iterable[Trajectory]):
    """All location keys of a dataset, concatenated in dataset order."""
    parts = [t.locs for t in dataset]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
