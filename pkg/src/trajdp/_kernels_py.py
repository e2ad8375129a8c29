"""Pure-Python segment stores and K-nearest search.

Mirror of the compiled ``_kernels`` extension. Every public name here has a
compiled twin with the same signature and bit-identical results; tests run
both side by side.
"""
from __future__ import annotations

import bisect
import heapq
import math

import numpy as np

BACKEND = "python"

MODE_SEGMENTS = 0
MODE_TRAJECTORIES = 1

STRATEGY_TOPDOWN = 0
STRATEGY_BOTTOMUP = 1
STRATEGY_BUD = 2


def seg_dist(qx, qy, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        px, py = ax, ay
    else:
        t = ((qx - ax) * dx + (qy - ay) * dy) / l2
        if t <= 0.0:
            px, py = ax, ay
        elif t >= 1.0:
            px, py = bx, by
        else:
            px = ax + t * dx
            py = ay + t * dy
    ex = qx - px
    ey = qy - py
    return math.sqrt(ex * ex + ey * ey)


def seg_dists(qx, qy, ax, ay, bx, by):
    """Vectorised ``seg_dist`` over endpoint arrays."""
    ax = np.asarray(ax, dtype=np.float64)
    ay = np.asarray(ay, dtype=np.float64)
    bx = np.asarray(bx, dtype=np.float64)
    by = np.asarray(by, dtype=np.float64)
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((qx - ax) * dx + (qy - ay) * dy) / l2
    px = ax + t * dx
    py = ay + t * dy
    lo = (l2 == 0.0) | (t <= 0.0)
    hi = ~lo & (t >= 1.0)
    px = np.where(lo, ax, np.where(hi, bx, px))
    py = np.where(lo, ay, np.where(hi, by, py))
    ex = qx - px
    ey = qy - py
    return np.sqrt(ex * ex + ey * ey)


def rect_mindist(qx, qy, x0, y0, x1, y1):
    ex = 0.0
    if qx < x0:
        ex = x0 - qx
    elif qx > x1:
        ex = qx - x1
    ey = 0.0
    if qy < y0:
        ey = y0 - qy
    elif qy > y1:
        ey = qy - y1
    return math.sqrt(ex * ex + ey * ey)


def finest_cell(x, g):
    c = int(math.floor(x * g))
    if c < 0:
        return 0
    if c >= g:
        return g - 1
    return c


def _center(key, grid):
    return (key // grid + 0.5) / grid, (key % grid + 0.5) / grid


def deletion_steps(locs, q, grid):
    """Losses of deleting every occurrence of q, front to back.

    Each loss is taken with all earlier occurrences already removed, so the
    left neighbour is the sample before the run of q and the right one is
    the next original sample. Returns (indices, losses).
    """
    locs = np.asarray(locs, dtype=np.int64)
    idx = np.flatnonzero(locs == q)
    n = locs.size
    run_start = np.ones(idx.size, dtype=bool)
    run_start[1:] = idx[1:] != idx[:-1] + 1
    left = np.maximum.accumulate(np.where(run_start, idx, 0)) - 1
    right = idx + 1
    right[right >= n] = -1
    qx, qy = _center(int(q), grid)
    out = np.zeros(idx.size, dtype=np.float64)
    lk = locs[np.maximum(left, 0)]
    rk = locs[np.maximum(right, 0)]
    lx, ly = (lk // grid + 0.5) / grid, (lk % grid + 0.5) / grid
    rx, ry = (rk // grid + 0.5) / grid, (rk % grid + 0.5) / grid
    both = (left >= 0) & (right >= 0)
    only_l = (left >= 0) & (right < 0)
    only_r = (left < 0) & (right >= 0)
    out[both] = seg_dists(qx, qy, lx[both], ly[both], rx[both], ry[both])
    out[only_l] = seg_dists(qx, qy, lx[only_l], ly[only_l], lx[only_l], ly[only_l])
    out[only_r] = seg_dists(qx, qy, rx[only_r], ry[only_r], rx[only_r], ry[only_r])
    return idx, out


def greedy_delete(locs, q, count, grid):
    """Remove ``count`` occurrences of q one at a time, cheapest first.

    The loss of removing an occurrence is its distance to the segment that
    joins its current neighbours (to the single neighbour at an end). Ties
    go to the earlier index. Returns (removed original indices, losses).
    """
    locs = np.asarray(locs, dtype=np.int64)
    n = locs.size
    q = int(q)
    occ = np.flatnonzero(locs == q).tolist()
    if count > len(occ):
        raise ValueError(f"only {len(occ)} occurrences of {q}")
    # linked list over the original indices, materialised only where edited
    prev, nxt = {}, {}
    qx, qy = _center(q, grid)
    version = {}

    def loss_at(i):
        p, r = prev.get(i, i - 1), nxt.get(i, i + 1)
        if r >= n:
            r = -1
        if p < 0 and r < 0:
            return 0.0
        if p < 0:
            rx, ry = _center(int(locs[r]), grid)
            return seg_dist(qx, qy, rx, ry, rx, ry)
        px, py = _center(int(locs[p]), grid)
        if r < 0:
            return seg_dist(qx, qy, px, py, px, py)
        rx, ry = _center(int(locs[r]), grid)
        return seg_dist(qx, qy, px, py, rx, ry)

    heap = []
    for i in occ:
        version[i] = 0
        heap.append((loss_at(i), i, 0))
    heapq.heapify(heap)
    removed, losses = [], []
    while len(removed) < count:
        d, i, ver = heapq.heappop(heap)
        if version.get(i) != ver:
            continue
        removed.append(i)
        losses.append(d)
        del version[i]
        p, r = prev.get(i, i - 1), nxt.get(i, i + 1)
        if r >= n:
            r = -1
        if p >= 0:
            nxt[p] = r
        if r >= 0:
            prev[r] = p
        for j in (p, r):
            if j >= 0 and j in version:
                version[j] += 1
                heapq.heappush(heap, (loss_at(j), j, version[j]))
    return np.array(removed, dtype=np.int64), np.array(losses, dtype=np.float64)


class _TopK:
    """Bounded candidate queue ordered by (dist, tid, pos)."""

    __slots__ = ("k", "items")

    def __init__(self, k):
        self.k = k
        self.items = []

    def full(self):
        return len(self.items) >= self.k

    def theta(self):
        if len(self.items) >= self.k:
            return self.items[-1][0]
        return math.inf

    def offer(self, d, tid, pos, sid):
        items = self.items
        if len(items) >= self.k:
            w = items[-1]
            if (d, tid, pos) >= (w[0], w[1], w[2]):
                return
            items.pop()
        bisect.insort(items, (d, tid, pos, sid))


class _TopKTraj:
    """Bounded queue of distinct trajectories ordered by (min dist, tid)."""

    __slots__ = ("k", "items", "best")

    def __init__(self, k):
        self.k = k
        self.items = []  # sorted (d, tid)
        self.best = {}  # tid -> (d, pos, sid)

    def full(self):
        return len(self.items) >= self.k

    def theta(self):
        if len(self.items) >= self.k:
            return self.items[-1][0]
        return math.inf

    def offer(self, d, tid, pos, sid):
        cur = self.best.get(tid)
        if cur is not None:
            if d < cur[0] or (d == cur[0] and pos < cur[1]):
                self.items.remove((cur[0], tid))
                bisect.insort(self.items, (d, tid))
                self.best[tid] = (d, pos, sid)
            return
        items = self.items
        if len(items) >= self.k:
            w = items[-1]
            if (d, tid) >= w:
                return
            items.pop()
            del self.best[w[1]]
        bisect.insort(items, (d, tid))
        self.best[tid] = (d, pos, sid)

    def result(self):
        out = []
        for d, tid in self.items:
            _, pos, sid = self.best[tid]
            out.append((d, tid, pos, sid))
        return out


def _make_acc(k, mode):
    if mode == MODE_TRAJECTORIES:
        return _TopKTraj(k)
    return _TopK(k)


def _acc_result(acc):
    if isinstance(acc, _TopKTraj):
        return acc.result()
    return list(acc.items)


class _Store:
    """Growable segment table shared by all cores."""

    def __init__(self):
        self.ax = []
        self.ay = []
        self.bx = []
        self.by = []
        self.tid = []
        self.pos = []
        self.alive = []
        self.n_alive = 0
        self.n_cells = 0
        self.n_dists = 0

    def __len__(self):
        return self.n_alive

    def _append(self, ax, ay, bx, by, tid, pos):
        sid = len(self.ax)
        self.ax.append(float(ax))
        self.ay.append(float(ay))
        self.bx.append(float(bx))
        self.by.append(float(by))
        self.tid.append(int(tid))
        self.pos.append(int(pos))
        self.alive.append(True)
        self.n_alive += 1
        return sid

    def _kill(self, sid):
        if sid < 0 or sid >= len(self.alive) or not self.alive[sid]:
            raise KeyError(f"segment {sid} is not stored")
        self.alive[sid] = False
        self.n_alive -= 1

    def add(self, ax, ay, bx, by, tid, pos):
        sid = self._append(ax, ay, bx, by, tid, pos)
        self._place(sid)
        return sid

    def add_many(self, ax, ay, bx, by, tid, pos0):
        n = len(ax)
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            out[i] = self.add(ax[i], ay[i], bx[i], by[i], tid, pos0 + i)
        return out

    def remove(self, sid):
        sid = int(sid)
        self._kill(sid)
        self._unplace(sid)

    def remove_many(self, sids):
        for sid in sids:
            self.remove(int(sid))

    def set_positions(self, sids):
        pos = self.pos
        for i, sid in enumerate(sids):
            pos[int(sid)] = i

    def resync(self, old, src, locs, grid, tid):
        """Re-index one trajectory after an edit; returns its new store ids.

        ``src[i]`` is the old index of new point i or -1. A segment whose
        endpoints were consecutive before and after keeps its store id; old
        segments not kept are removed, then new ones added front to back.
        """
        old = np.asarray(old, dtype=np.int64)
        src = np.asarray(src, dtype=np.int64)
        locs = np.asarray(locs, dtype=np.int64)
        n = locs.size
        a, b = src[:-1], src[1:]
        keep = (a >= 0) & (b == a + 1)
        old_kept = np.zeros(old.size, dtype=bool)
        old_kept[a[keep]] = True
        self.remove_many(old[~old_kept])
        new = np.empty(max(n - 1, 0), dtype=np.int64)
        new[keep] = old[a[keep]]
        for i in np.flatnonzero(~keep).tolist():
            ax, ay = _center(int(locs[i]), grid)
            bx, by = _center(int(locs[i + 1]), grid)
            new[i] = self.add(ax, ay, bx, by, tid, i)
        self.set_positions(new)
        return new

    def is_alive(self, sid):
        return 0 <= sid < len(self.alive) and self.alive[sid]

    def segment(self, sid):
        sid = int(sid)
        if not self.is_alive(sid):
            raise KeyError(f"segment {sid} is not stored")
        return (self.ax[sid], self.ay[sid], self.bx[sid], self.by[sid],
                self.tid[sid], self.pos[sid])

    def reset_counters(self):
        self.n_cells = 0
        self.n_dists = 0

    def clear(self):
        """Drop every segment; the store then behaves as newly built."""
        self._clear_cells()
        _Store.__init__(self)

    def _clear_cells(self):
        pass

    def _place(self, sid):
        pass

    def _unplace(self, sid):
        pass

    def _scan(self, sids, qx, qy, acc, exclude_endpoint, mask):
        ax, ay, bx, by = self.ax, self.ay, self.bx, self.by
        tids, poss = self.tid, self.pos
        for sid in sids:
            t = tids[sid]
            if mask is not None and mask[t]:
                continue
            sax = ax[sid]
            say = ay[sid]
            sbx = bx[sid]
            sby = by[sid]
            if exclude_endpoint and ((sax == qx and say == qy) or (sbx == qx and sby == qy)):
                continue
            self.n_dists += 1
            d = seg_dist(qx, qy, sax, say, sbx, sby)
            if acc.full() and d > acc.theta():
                continue
            acc.offer(d, t, poss[sid], sid)


class LinearCore(_Store):
    """No index at all: every query scans every stored segment."""

    def search(self, qx, qy, k, mode=MODE_SEGMENTS, strategy=0,
               exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        acc = _make_acc(k, mode)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
        alive = self.alive
        self.n_cells += 1
        self._scan([s for s in range(len(alive)) if alive[s]], qx, qy, acc,
                   exclude_endpoint, mask)
        return _acc_result(acc)


class UGCore(_Store):
    """Single-level uniform grid; a segment is listed in every cell of its bbox."""

    def __init__(self, granularity):
        super().__init__()
        self.g = int(granularity)
        self.cells = {}

    def _clear_cells(self):
        self.cells = {}

    def _bbox_cells(self, sid):
        g = self.g
        cxa = finest_cell(self.ax[sid], g)
        cya = finest_cell(self.ay[sid], g)
        cxb = finest_cell(self.bx[sid], g)
        cyb = finest_cell(self.by[sid], g)
        for cx in range(min(cxa, cxb), max(cxa, cxb) + 1):
            for cy in range(min(cya, cyb), max(cya, cyb) + 1):
                yield cx * g + cy

    def _place(self, sid):
        for code in self._bbox_cells(sid):
            self.cells.setdefault(code, {})[sid] = None

    def _unplace(self, sid):
        for code in self._bbox_cells(sid):
            bucket = self.cells[code]
            del bucket[sid]
            if not bucket:
                del self.cells[code]

    def search(self, qx, qy, k, mode=MODE_SEGMENTS, strategy=0,
               exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        acc = _make_acc(k, mode)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
        g = self.g
        cqx = finest_cell(qx, g)
        cqy = finest_cell(qy, g)
        seen = set()
        ring = 0
        while True:
            if ring > 0:
                sides = []
                if cqx - ring >= 0:
                    sides.append(qx - (cqx - ring + 1) / g)
                if cqx + ring < g:
                    sides.append((cqx + ring) / g - qx)
                if cqy - ring >= 0:
                    sides.append(qy - (cqy - ring + 1) / g)
                if cqy + ring < g:
                    sides.append((cqy + ring) / g - qy)
                if not sides:
                    break
                lb = max(min(sides), 0.0)
                if acc.full() and lb > acc.theta():
                    break
            for cx, cy in _ring_cells(cqx, cqy, ring, g):
                if acc.full():
                    md = rect_mindist(qx, qy, cx / g, cy / g, (cx + 1) / g, (cy + 1) / g)
                    if md > acc.theta():
                        continue
                bucket = self.cells.get(cx * g + cy)
                if bucket is None:
                    continue
                self.n_cells += 1
                fresh = [s for s in bucket if s not in seen]
                seen.update(fresh)
                self._scan(fresh, qx, qy, acc, exclude_endpoint, mask)
            ring += 1
        return _acc_result(acc)


def _ring_cells(cx, cy, ring, g):
    if ring == 0:
        yield cx, cy
        return
    x0, x1 = cx - ring, cx + ring
    y0, y1 = cy - ring, cy + ring
    for x in range(max(x0, 0), min(x1, g - 1) + 1):
        if y0 >= 0:
            yield x, y0
        if y1 < g:
            yield x, y1
    for y in range(max(y0 + 1, 0), min(y1 - 1, g - 1) + 1):
        if x0 >= 0:
            yield x0, y
        if x1 < g:
            yield x1, y


class _Cell:
    __slots__ = ("level", "ix", "iy", "segs", "count")

    def __init__(self, level, ix, iy):
        self.level = level
        self.ix = ix
        self.iy = iy
        self.segs = {}
        self.count = 0


class HGCore(_Store):
    """Hierarchical grid: levels 1..H with 2**(h-1) cells per side.

    Segments live in their best-fit cell. A cell is materialised while its
    subtree holds at least one segment; the root always exists.
    """

    def __init__(self, levels):
        super().__init__()
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.levels = int(levels)
        self.g = 1 << (self.levels - 1)
        self._clear_cells()

    def _clear_cells(self):
        self.cells = {(1, 0, 0): _Cell(1, 0, 0)}
        self.seg_cell = {}

    def best_fit(self, ax, ay, bx, by):
        H, g = self.levels, self.g
        cxa = finest_cell(ax, g)
        cya = finest_cell(ay, g)
        cxb = finest_cell(bx, g)
        cyb = finest_cell(by, g)
        diff = (cxa ^ cxb) | (cya ^ cyb)
        level = H - diff.bit_length()
        shift = H - level
        return level, cxa >> shift, cya >> shift

    def _place(self, sid):
        key = self.best_fit(self.ax[sid], self.ay[sid], self.bx[sid], self.by[sid])
        self.seg_cell[sid] = key
        level, ix, iy = key
        cell = self.cells.get(key)
        if cell is None:
            cell = self.cells[key] = _Cell(level, ix, iy)
        cell.segs[sid] = None
        cell.count += 1
        while level > 1:
            level -= 1
            ix >>= 1
            iy >>= 1
            up = self.cells.get((level, ix, iy))
            if up is None:
                up = self.cells[(level, ix, iy)] = _Cell(level, ix, iy)
            up.count += 1

    def _unplace(self, sid):
        key = self.seg_cell.pop(sid)
        level, ix, iy = key
        cell = self.cells[key]
        del cell.segs[sid]
        while True:
            cell.count -= 1
            if cell.count == 0 and level > 1:
                del self.cells[(level, ix, iy)]
            if level == 1:
                break
            level -= 1
            ix >>= 1
            iy >>= 1
            cell = self.cells[(level, ix, iy)]

    def cell_of(self, sid):
        return self.seg_cell[int(sid)]

    def snapshot(self):
        """Materialised cells as sorted (level, ix, iy, count, sorted sids)."""
        return sorted(
            (c.level, c.ix, c.iy, c.count, tuple(sorted(c.segs)))
            for c in self.cells.values()
        )

    def mindist(self, qx, qy, level, ix, iy):
        r = 1 << (level - 1)
        return rect_mindist(qx, qy, ix / r, iy / r, (ix + 1) / r, (iy + 1) / r)

    def _children(self, cell):
        if cell.level >= self.levels:
            return []
        lv = cell.level + 1
        out = []
        for dx in (0, 1):
            for dy in (0, 1):
                c = self.cells.get((lv, 2 * cell.ix + dx, 2 * cell.iy + dy))
                if c is not None:
                    out.append(c)
        return out

    def _locate(self, qx, qy):
        H, g = self.levels, self.g
        fx = finest_cell(qx, g)
        fy = finest_cell(qy, g)
        for level in range(H, 0, -1):
            shift = H - level
            c = self.cells.get((level, fx >> shift, fy >> shift))
            if c is not None:
                return c
        raise AssertionError("root missing")

    def _visit(self, cell, qx, qy, acc, exclude_endpoint, mask):
        self.n_cells += 1
        if cell.segs:
            self._scan(cell.segs, qx, qy, acc, exclude_endpoint, mask)

    def search(self, qx, qy, k, mode=MODE_SEGMENTS, strategy=STRATEGY_BUD,
               exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        acc = _make_acc(k, mode)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
        if strategy == STRATEGY_TOPDOWN:
            self._topdown(qx, qy, acc, exclude_endpoint, mask)
        elif strategy in (STRATEGY_BOTTOMUP, STRATEGY_BUD):
            self._bottom_up(qx, qy, acc, exclude_endpoint, mask,
                            switch_at_root=strategy == STRATEGY_BUD)
        else:
            raise ValueError(f"unknown strategy {strategy}")
        return _acc_result(acc)

    def _topdown(self, qx, qy, acc, exclude_endpoint, mask):
        seq = 0
        heap = [(0.0, seq, (1, 0, 0))]
        while heap:
            md, _, key = heapq.heappop(heap)
            if acc.full() and md > acc.theta():
                break
            cell = self.cells[key]
            self._visit(cell, qx, qy, acc, exclude_endpoint, mask)
            for ch in self._children(cell):
                seq += 1
                heapq.heappush(heap, (self.mindist(qx, qy, ch.level, ch.ix, ch.iy),
                                      seq, (ch.level, ch.ix, ch.iy)))

    def _bottom_up(self, qx, qy, acc, exclude_endpoint, mask, switch_at_root):
        start = self._locate(qx, qy)
        stack = []
        heap = []
        seq = 0
        visited = set()
        root_access = False
        if start.level == 1 and switch_at_root:
            root_access = True
            heap.append((0.0, seq, (1, 0, 0)))
        else:
            stack.append(((start.level, start.ix, start.iy), 0.0))
        while heap if root_access else stack:
            if not root_access:
                key, md = stack.pop()
                if acc.full() and md > acc.theta():
                    continue
            else:
                md, _, key = heapq.heappop(heap)
                if acc.full() and md > acc.theta():
                    break
            if key in visited:
                continue
            visited.add(key)
            cell = self.cells[key]
            self._visit(cell, qx, qy, acc, exclude_endpoint, mask)
            if not root_access and cell.level > 1:
                pkey = (cell.level - 1, cell.ix >> 1, cell.iy >> 1)
                if pkey not in visited:
                    if pkey[0] == 1 and switch_at_root:
                        root_access = True
                        seq += 1
                        heapq.heappush(heap, (0.0, seq, pkey))
                    else:
                        stack.append((pkey, 0.0))
            kids = []
            for ch in self._children(cell):
                ckey = (ch.level, ch.ix, ch.iy)
                if ckey not in visited:
                    kids.append((self.mindist(qx, qy, ch.level, ch.ix, ch.iy), ckey))
            if root_access:
                for md_c, ckey in kids:
                    seq += 1
                    heapq.heappush(heap, (md_c, seq, ckey))
            else:
                # farthest first so the nearest child is popped next
                kids.sort(key=lambda t: -t[0])
                for md_c, ckey in kids:
                    stack.append((ckey, md_c))
