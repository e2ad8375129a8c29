"""Segment indexes and K-nearest segment search.

``SegmentIndex`` wraps one of the kernel stores (linear scan, uniform grid
or hierarchical grid) and keeps, for every trajectory, the store ids of its
segments in order. Search strategies:

    linear  scan every segment
    UG      single-level uniform grid at the finest resolution
    HG_t    hierarchical grid, best-first from the root
    HG_b    hierarchical grid, depth-first upward from the query cell
    HG_+    hierarchical grid, upward from the query cell until the root,
            then best-first downward

Results are ordered by (distance, trajectory id, segment index) under every
strategy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import get_backend
from .geo import DEFAULT_GRID, Segment, Trajectory, center_xy

STRATEGIES = ("linear", "UG", "HG_t", "HG_b", "HG_+")


class IndexIntegrityError(KeyError):
    """A segment expected in the index is not there."""


def levels_for(grid):
    """Number of hierarchy levels whose finest level has ``grid`` cells per side."""
    if grid < 1 or grid & (grid - 1):
        raise ValueError(f"grid must be a power of two, got {grid}")
    return grid.bit_length()


@dataclass(frozen=True)
class GridCell:
    level: int
    ix: int
    iy: int
    count: int  # segments stored in this cell and below
    segment_ids: tuple

    @property
    def coverage(self):
        r = 1 << (self.level - 1)
        return (self.ix / r, self.iy / r, (self.ix + 1) / r, (self.iy + 1) / r)


@dataclass
class SearchResult:
    items: list  # (Segment, distance), nearest first

    @property
    def theta(self):
        return self.items[-1][1] if self.items else math.inf

    def __len__(self):
        return len(self.items)

    def keys(self):
        return [(d, s.trajectory_id, s.index) for s, d in self.items]


class SegmentIndex:
    def __init__(self, strategy="HG_+", grid=DEFAULT_GRID, backend=None):
        if strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        k = get_backend(backend)
        self.kernels = k
        self.strategy = strategy
        self.grid = int(grid)
        self.levels = levels_for(self.grid)
        if strategy == "linear":
            self.core = k.LinearCore()
        elif strategy == "UG":
            self.core = k.UGCore(self.grid)
        else:
            self.core = k.HGCore(self.levels)
        self._mode = {"HG_t": k.STRATEGY_TOPDOWN, "HG_b": k.STRATEGY_BOTTOMUP,
                      "HG_+": k.STRATEGY_BUD}.get(strategy, 0)
        self._sids = {}  # tid -> store ids by segment index
        self._single = set()  # tids indexed by a single-point placeholder
        self.n_searches = 0

    def __len__(self):
        return len(self.core)

    def clear(self):
        """Empty the index for reuse; cheaper than building a new one."""
        self.core.clear()
        self._sids = {}
        self._single = set()
        self.n_searches = 0
        self.core.reset_counters()

    # --- trajectory-level maintenance -------------------------------------

    def add_trajectory(self, tid, traj: Trajectory):
        x, y = traj.xy()
        if len(traj) == 1:
            sids = self.core.add_many(x, y, x, y, tid, 0)
            self._single.add(tid)
        else:
            sids = self.core.add_many(x[:-1], y[:-1], x[1:], y[1:], tid, 0)
            self._single.discard(tid)
        self._sids[tid] = sids

    def add_dataset(self, dataset: Sequence[Trajectory]):
        for tid, t in enumerate(dataset):
            self.add_trajectory(tid, t)

    def remove_trajectory(self, tid):
        self.core.remove_many(self._sids.pop(tid))
        self._single.discard(tid)

    def sync_trajectory(self, tid, new: Trajectory, src):
        """Bring trajectory ``tid`` up to date after an edit.

        ``src[i]`` is the old index of new point i, or -1 for an inserted
        point. Segments whose endpoints were consecutive before and after the
        edit stay in place; the rest are removed or added.
        """
        old = self._sids[tid]
        n = len(new)
        if tid in self._single or n <= 1:
            self.remove_trajectory(tid)
            self.add_trajectory(tid, new)
            return
        new_sids = self.core.resync(old, src, new.locs, new.grid, tid)
        self._sids[tid] = new_sids

    def segment_ids(self, tid):
        return self._sids[tid]

    # --- search -----------------------------------------------------------

    def search(self, qx, qy, k, trajectories=False, exclude_endpoint=False, mask=None):
        """Raw results as (distance, tid, index, store id) tuples."""
        self.n_searches += 1
        mode = self.kernels.MODE_TRAJECTORIES if trajectories else self.kernels.MODE_SEGMENTS
        return self.core.search(float(qx), float(qy), int(k), mode, self._mode,
                                exclude_endpoint, mask)

    def reset_counters(self):
        self.core.reset_counters()
        self.n_searches = 0

    @property
    def visits(self):
        """(cells visited, segment distances computed) since the last reset."""
        return self.core.n_cells, self.core.n_dists

    def segment(self, sid):
        ax, ay, bx, by, tid, pos = self.core.segment(int(sid))
        return Segment((ax, ay), (bx, by), tid, pos)

    def structure(self):
        """Backend-independent content: cells with their segment geometry."""
        if not hasattr(self.core, "snapshot"):
            return sorted(self._segment_tuple(s) for sids in self._sids.values() for s in sids)
        out = []
        for level, ix, iy, count, sids in self.core.snapshot():
            out.append((level, ix, iy, count,
                        tuple(sorted(self._segment_tuple(s) for s in sids))))
        return out

    def _segment_tuple(self, sid):
        ax, ay, bx, by, tid, pos = self.core.segment(int(sid))
        return (tid, pos, ax, ay, bx, by)


class HierarchicalGrid(SegmentIndex):
    """Hierarchical grid addressed through ``Segment`` objects."""

    def __init__(self, levels, strategy="HG_+", backend=None):
        if strategy not in ("HG_t", "HG_b", "HG_+"):
            raise ValueError("hierarchical grid strategies are HG_t, HG_b, HG_+")
        super().__init__(strategy, 1 << (levels - 1), backend)
        self._by_index = {}  # tid -> {segment index: store id}

    def add_segments(self, segments: Sequence[Segment]):
        for s in segments:
            per = self._by_index.setdefault(s.trajectory_id, {})
            if s.index in per:
                raise IndexIntegrityError(f"segment {(s.trajectory_id, s.index)} already indexed")
            per[s.index] = self.core.add(s.a[0], s.a[1], s.b[0], s.b[1], s.trajectory_id, s.index)

    def _lookup(self, s: Segment):
        sid = self._by_index.get(s.trajectory_id, {}).get(s.index)
        if sid is None:
            raise IndexIntegrityError(f"segment {(s.trajectory_id, s.index)} is not indexed")
        ax, ay, bx, by, _, _ = self.core.segment(sid)
        if (ax, ay, bx, by) != (s.a[0], s.a[1], s.b[0], s.b[1]):
            raise IndexIntegrityError(f"segment {(s.trajectory_id, s.index)} has other endpoints")
        return sid

    def segments(self):
        return [self.segment(sid) for per in self._by_index.values() for sid in per.values()]

    def cells(self):
        return [GridCell(lv, ix, iy, c, sids) for lv, ix, iy, c, sids in self.core.snapshot()]

    def cell(self, level, ix, iy):
        for c in self.cells():
            if (c.level, c.ix, c.iy) == (level, ix, iy):
                return c
        return None

    def children(self, cell: GridCell):
        want = {(cell.level + 1, 2 * cell.ix + dx, 2 * cell.iy + dy)
                for dx in (0, 1) for dy in (0, 1)}
        return [c for c in self.cells() if (c.level, c.ix, c.iy) in want]

    def parent(self, cell: GridCell):
        if cell.level == 1:
            return None
        return self.cell(cell.level - 1, cell.ix >> 1, cell.iy >> 1)

    def cell_of(self, s: Segment):
        return self.core.cell_of(self._lookup(s))


def best_fit_cell(s: Segment, levels):
    """Deepest level whose cell holds both endpoints, with that cell's indices."""
    g = 1 << (levels - 1)
    k = get_backend()
    cxa, cya = k.finest_cell(s.a[0], g), k.finest_cell(s.a[1], g)
    cxb, cyb = k.finest_cell(s.b[0], g), k.finest_cell(s.b[1], g)
    level = levels - ((cxa ^ cxb) | (cya ^ cyb)).bit_length()
    shift = levels - level
    return level, cxa >> shift, cya >> shift


def build_index(segments: Sequence[Segment], levels, strategy="HG_+", backend=None):
    grid = HierarchicalGrid(levels, strategy, backend)
    grid.add_segments(segments)
    return grid


def min_dist(q, cell: GridCell):
    """Distance from q to the closed rectangle covered by ``cell``."""
    x0, y0, x1, y1 = cell.coverage
    return get_backend().rect_mindist(float(q[0]), float(q[1]), x0, y0, x1, y1)


def knn_linear(q, segments: Sequence[Segment], k):
    """Reference search: sort every segment by (distance, trajectory id, index)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    k_py = get_backend("python")
    scored = sorted(
        (k_py.seg_dist(q[0], q[1], s.a[0], s.a[1], s.b[0], s.b[1]), s.trajectory_id, s.index, s)
        for s in segments
    )
    return SearchResult([(s, d) for d, _, _, s in scored[:k]])


def _knn(q, grid: HierarchicalGrid, k, mode):
    grid.n_searches += 1
    raw = grid.core.search(float(q[0]), float(q[1]), int(k), grid.kernels.MODE_SEGMENTS, mode,
                           False, None)
    return SearchResult([(grid.segment(sid), d) for d, _, _, sid in raw])


def knn_bud(q, grid: HierarchicalGrid, k):
    return _knn(q, grid, k, grid.kernels.STRATEGY_BUD)


def knn_topdown(q, grid: HierarchicalGrid, k):
    return _knn(q, grid, k, grid.kernels.STRATEGY_TOPDOWN)


def knn_bottomup(q, grid: HierarchicalGrid, k):
    return _knn(q, grid, k, grid.kernels.STRATEGY_BOTTOMUP)


def update_after_edit(grid: HierarchicalGrid, removed: Sequence[Segment],
                      added: Sequence[Segment]):
    """Apply an edit's segment diff.

    ``removed`` segments are named by their pre-edit index and must be
    present. ``added`` segments carry post-edit indices. Surviving segments
    of each touched trajectory keep their order and fill the remaining
    post-edit indices.
    """
    doomed = [(s.trajectory_id, s.index, grid._lookup(s)) for s in removed]
    touched = {t for t, _, _ in doomed} | {s.trajectory_id for s in added}
    for tid, idx, sid in doomed:
        grid.core.remove(sid)
        del grid._by_index[tid][idx]
    for tid in sorted(touched):
        survivors = [sid for _, sid in sorted(grid._by_index.get(tid, {}).items())]
        fresh = {s.index: s for s in added if s.trajectory_id == tid}
        n = len(survivors) + len(fresh)
        if any(not 0 <= i < n for i in fresh):
            raise IndexIntegrityError(f"added segment index out of range for trajectory {tid}")
        order = []
        it = iter(survivors)
        for i in range(n):
            s = fresh.get(i)
            if s is None:
                order.append(next(it))
            else:
                order.append(grid.core.add(s.a[0], s.a[1], s.b[0], s.b[1], tid, i))
        if order:
            grid.core.set_positions(np.array(order, dtype=np.int64))
            grid._by_index[tid] = dict(enumerate(order))
        else:
            grid._by_index.pop(tid, None)
