# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled segment stores and K-nearest search.

Same public surface as ``_kernels_py``; results, tie-breaks and visit
counters are identical.
"""
cimport cython
from libc.math cimport sqrt, floor, INFINITY
from libc.stdint cimport int32_t, int64_t, uint8_t
from libcpp.vector cimport vector
from libcpp.queue cimport priority_queue
from libcpp.utility cimport pair

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

MODE_SEGMENTS = 0
MODE_TRAJECTORIES = 1

STRATEGY_TOPDOWN = 0
STRATEGY_BOTTOMUP = 1
STRATEGY_BUD = 2


cdef inline double _seg_dist(double qx, double qy, double ax, double ay,
                             double bx, double by) noexcept nogil:
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double l2 = dx * dx + dy * dy
    cdef double t, px, py, ex, ey
    if l2 == 0.0:
        px = ax
        py = ay
    else:
        t = ((qx - ax) * dx + (qy - ay) * dy) / l2
        if t <= 0.0:
            px = ax
            py = ay
        elif t >= 1.0:
            px = bx
            py = by
        else:
            px = ax + t * dx
            py = ay + t * dy
    ex = qx - px
    ey = qy - py
    return sqrt(ex * ex + ey * ey)


cdef inline double _rect_mindist(double qx, double qy, double x0, double y0,
                                 double x1, double y1) noexcept nogil:
    cdef double ex = 0.0
    cdef double ey = 0.0
    if qx < x0:
        ex = x0 - qx
    elif qx > x1:
        ex = qx - x1
    if qy < y0:
        ey = y0 - qy
    elif qy > y1:
        ey = qy - y1
    return sqrt(ex * ex + ey * ey)


cdef inline int _finest_cell(double x, int g) noexcept nogil:
    cdef double f = floor(x * g)
    if f < 0:
        return 0
    if f >= g:
        return g - 1
    return <int>f


cdef inline int _bit_length(unsigned int v) noexcept nogil:
    cdef int n = 0
    while v:
        v >>= 1
        n += 1
    return n


def seg_dist(double qx, double qy, double ax, double ay, double bx, double by):
    return _seg_dist(qx, qy, ax, ay, bx, by)


def seg_dists(double qx, double qy, ax, ay, bx, by):
    """Vectorised ``seg_dist`` over endpoint arrays."""
    cdef const double[::1] vax = np.ascontiguousarray(ax, dtype=np.float64)
    cdef const double[::1] vay = np.ascontiguousarray(ay, dtype=np.float64)
    cdef const double[::1] vbx = np.ascontiguousarray(bx, dtype=np.float64)
    cdef const double[::1] vby = np.ascontiguousarray(by, dtype=np.float64)
    cdef Py_ssize_t n = vax.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] vo = out
    with nogil:
        for i in range(n):
            vo[i] = _seg_dist(qx, qy, vax[i], vay[i], vbx[i], vby[i])
    return out


def rect_mindist(double qx, double qy, double x0, double y0, double x1, double y1):
    return _rect_mindist(qx, qy, x0, y0, x1, y1)


def finest_cell(double x, int g):
    return _finest_cell(x, g)


cdef inline double _cx(int64_t key, int64_t grid) noexcept nogil:
    return (<double>(key // grid) + 0.5) / grid


cdef inline double _cy(int64_t key, int64_t grid) noexcept nogil:
    return (<double>(key % grid) + 0.5) / grid


cdef inline double _del_loss(const int64_t* locs, int64_t p, int64_t r, double qx, double qy,
                             int64_t grid) noexcept nogil:
    cdef double px, py, rx, ry
    if p < 0 and r < 0:
        return 0.0
    if p < 0:
        rx = _cx(locs[r], grid)
        ry = _cy(locs[r], grid)
        return _seg_dist(qx, qy, rx, ry, rx, ry)
    px = _cx(locs[p], grid)
    py = _cy(locs[p], grid)
    if r < 0:
        return _seg_dist(qx, qy, px, py, px, py)
    rx = _cx(locs[r], grid)
    ry = _cy(locs[r], grid)
    return _seg_dist(qx, qy, px, py, rx, ry)


ctypedef pair[double, pair[int64_t, int64_t]] DItem


def deletion_steps(locs, long long q, long long grid):
    """Losses of deleting every occurrence of q, front to back."""
    cdef const int64_t[::1] v = np.ascontiguousarray(locs, dtype=np.int64)
    cdef Py_ssize_t n = v.shape[0], i, j = 0
    cdef Py_ssize_t occ = 0
    for i in range(n):
        if v[i] == q:
            occ += 1
    idx = np.empty(occ, dtype=np.int64)
    out = np.empty(occ, dtype=np.float64)
    cdef int64_t[::1] vi = idx
    cdef double[::1] vo = out
    cdef int64_t left = -1, right
    cdef double qx = _cx(q, grid), qy = _cy(q, grid)
    for i in range(n):
        if v[i] != q:
            left = i
            continue
        right = i + 1 if i + 1 < n else -1
        vi[j] = i
        vo[j] = _del_loss(&v[0], left, right, qx, qy, grid)
        j += 1
    return idx, out


def greedy_delete(locs, long long q, long long count, long long grid):
    """Remove ``count`` occurrences of q one at a time, cheapest first."""
    cdef const int64_t[::1] v = np.ascontiguousarray(locs, dtype=np.int64)
    cdef Py_ssize_t n = v.shape[0], i
    cdef vector[int64_t] prev, nxt, version
    cdef priority_queue[DItem] heap  # max-heap on negated (loss, index, version)
    cdef int64_t occ = 0, p, r, j, ver, side
    cdef double d, qx = _cx(q, grid), qy = _cy(q, grid)
    cdef DItem it
    for i in range(n):
        if v[i] == q:
            occ += 1
    if count > occ:
        raise ValueError(f"only {occ} occurrences of {q}")
    removed = np.empty(count, dtype=np.int64)
    losses = np.empty(count, dtype=np.float64)
    cdef int64_t[::1] vr = removed
    cdef double[::1] vl = losses
    if count <= 0:
        return removed, losses
    prev.resize(n)
    nxt.resize(n)
    version.assign(n, -1)  # -1: not a live occurrence
    for i in range(n):
        prev[i] = i - 1
        nxt[i] = i + 1 if i + 1 < n else -1
    for i in range(n):
        if v[i] == q:
            version[i] = 0
            heap.push(DItem(-_del_loss(&v[0], prev[i], nxt[i], qx, qy, grid),
                            pair[int64_t, int64_t](-i, 0)))
    cdef int64_t done = 0
    while done < count:
        it = heap.top()
        heap.pop()
        d = -it.first
        j = -it.second.first
        ver = -it.second.second
        if version[j] != ver:
            continue
        vr[done] = j
        vl[done] = d
        done += 1
        version[j] = -1
        p = prev[j]
        r = nxt[j]
        if p >= 0:
            nxt[p] = r
        if r >= 0:
            prev[r] = p
        for side in range(2):
            i = p if side == 0 else r
            if i >= 0 and version[i] >= 0:
                version[i] += 1
                heap.push(DItem(-_del_loss(&v[0], prev[i], nxt[i], qx, qy, grid),
                                pair[int64_t, int64_t](-i, -version[i])))
    return removed, losses


cdef struct Cand:
    double d
    int32_t tid
    int32_t pos
    int64_t sid


cdef struct SegRec:
    double ax, ay, bx, by
    int32_t tid, pos
    int64_t sid


cdef struct QCtx:
    double qx, qy
    bint excl
    const uint8_t* mask
    const SegRec* base  # authoritative records; cell copies may hold stale positions
    long long n_dists


cdef inline bint _less_seg(double d, int32_t t, int32_t p, Cand* c) noexcept nogil:
    if d != c.d:
        return d < c.d
    if t != c.tid:
        return t < c.tid
    return p < c.pos


@cython.final
cdef class _Acc:
    cdef int k
    cdef int mode
    cdef double th
    cdef vector[Cand] items

    def __cinit__(self, int k, int mode):
        self.k = k
        self.mode = mode
        self.th = INFINITY
        self.items.reserve(k if k < 4096 else 4096)

    cdef inline bint full(self) noexcept:
        return <int>self.items.size() >= self.k

    cdef inline double theta(self) noexcept:
        return self.th

    cdef inline void offer(self, double d, int32_t tid, int32_t pos, int64_t sid) noexcept:
        if self.mode == 0:
            self._offer_seg(d, tid, pos, sid)
        else:
            self._offer_traj(d, tid, pos, sid)
        if <int>self.items.size() >= self.k:
            self.th = self.items.back().d

    cdef void _offer_seg(self, double d, int32_t tid, int32_t pos, int64_t sid) noexcept:
        cdef Py_ssize_t n = self.items.size()
        cdef Cand c
        cdef Py_ssize_t i
        if n >= self.k:
            if not _less_seg(d, tid, pos, &self.items[n - 1]):
                return
            self.items.pop_back()
        c.d = d
        c.tid = tid
        c.pos = pos
        c.sid = sid
        self.items.push_back(c)
        i = self.items.size() - 1
        while i > 0 and _less_seg(d, tid, pos, &self.items[i - 1]):
            self.items[i] = self.items[i - 1]
            i -= 1
        self.items[i] = c

    cdef void _offer_traj(self, double d, int32_t tid, int32_t pos, int64_t sid) noexcept:
        cdef Py_ssize_t n = self.items.size()
        cdef Py_ssize_t i, j
        cdef Cand c
        cdef Cand* w
        for j in range(n):
            if self.items[j].tid == tid:
                w = &self.items[j]
                if d < w.d or (d == w.d and pos < w.pos):
                    w.d = d
                    w.pos = pos
                    w.sid = sid
                    c = self.items[j]
                    i = j
                    while i > 0 and (d < self.items[i - 1].d or
                                     (d == self.items[i - 1].d and tid < self.items[i - 1].tid)):
                        self.items[i] = self.items[i - 1]
                        i -= 1
                    self.items[i] = c
                return
        if n >= self.k:
            w = &self.items[n - 1]
            if not (d < w.d or (d == w.d and tid < w.tid)):
                return
            self.items.pop_back()
        c.d = d
        c.tid = tid
        c.pos = pos
        c.sid = sid
        self.items.push_back(c)
        i = self.items.size() - 1
        while i > 0 and (d < self.items[i - 1].d or
                         (d == self.items[i - 1].d and tid < self.items[i - 1].tid)):
            self.items[i] = self.items[i - 1]
            i -= 1
        self.items[i] = c

    cdef list result(self):
        cdef list out = []
        cdef Py_ssize_t i
        for i in range(<Py_ssize_t>self.items.size()):
            out.append((self.items[i].d, self.items[i].tid, self.items[i].pos,
                        self.items[i].sid))
        return out


cdef inline void _scan(QCtx* q, const SegRec* r, _Acc acc) noexcept:
    cdef double d
    if q.mask != NULL and q.mask[r.tid]:
        return
    if q.excl and ((r.ax == q.qx and r.ay == q.qy) or (r.bx == q.qx and r.by == q.qy)):
        return
    q.n_dists += 1
    d = _seg_dist(q.qx, q.qy, r.ax, r.ay, r.bx, r.by)
    if d > acc.th:
        return
    acc.offer(d, r.tid, q.base[r.sid].pos, r.sid)


cdef class _Store:
    """Growable segment table shared by all cores."""
    cdef vector[SegRec] recs
    cdef vector[uint8_t] alive
    cdef Py_ssize_t n_alive
    cdef public long long n_cells
    cdef public long long n_dists
    # per-query scratch
    cdef QCtx q
    cdef object _mask_ref

    def __len__(self):
        return self.n_alive

    cdef int64_t _append(self, double ax, double ay, double bx, double by,
                         int32_t tid, int32_t pos):
        cdef SegRec r
        r.sid = self.recs.size()
        r.ax = ax
        r.ay = ay
        r.bx = bx
        r.by = by
        r.tid = tid
        r.pos = pos
        self.recs.push_back(r)
        self.alive.push_back(1)
        self.n_alive += 1
        return r.sid

    cdef void _kill(self, int64_t sid) except *:
        if sid < 0 or sid >= <int64_t>self.alive.size() or not self.alive[sid]:
            raise KeyError(f"segment {sid} is not stored")
        self.alive[sid] = 0
        self.n_alive -= 1

    cdef void _place(self, int64_t sid) except *:
        pass

    cdef void _unplace(self, int64_t sid) except *:
        pass

    def add(self, double ax, double ay, double bx, double by, int tid, int pos):
        cdef int64_t sid = self._append(ax, ay, bx, by, tid, pos)
        self._place(sid)
        return sid

    def add_many(self, ax, ay, bx, by, int tid, int pos0):
        cdef const double[::1] vax = np.ascontiguousarray(ax, dtype=np.float64)
        cdef const double[::1] vay = np.ascontiguousarray(ay, dtype=np.float64)
        cdef const double[::1] vbx = np.ascontiguousarray(bx, dtype=np.float64)
        cdef const double[::1] vby = np.ascontiguousarray(by, dtype=np.float64)
        cdef Py_ssize_t n = vax.shape[0], i
        out = np.empty(n, dtype=np.int64)
        cdef int64_t[::1] vo = out
        cdef int64_t sid
        for i in range(n):
            sid = self._append(vax[i], vay[i], vbx[i], vby[i], tid, pos0 + i)
            self._place(sid)
            vo[i] = sid
        return out

    def remove(self, long long sid):
        self._kill(sid)
        self._unplace(sid)

    def remove_many(self, sids):
        cdef const int64_t[::1] v = np.ascontiguousarray(sids, dtype=np.int64)
        cdef Py_ssize_t i
        for i in range(v.shape[0]):
            self._kill(v[i])
            self._unplace(v[i])

    def set_positions(self, sids):
        cdef const int64_t[::1] v = np.ascontiguousarray(sids, dtype=np.int64)
        cdef Py_ssize_t i
        for i in range(v.shape[0]):
            self.recs[v[i]].pos = <int32_t>i

    def resync(self, old, src, locs, long long grid, int tid):
        """Re-index one trajectory after an edit; returns its new store ids."""
        cdef const int64_t[::1] vold = np.ascontiguousarray(old, dtype=np.int64)
        cdef const int64_t[::1] vsrc = np.ascontiguousarray(src, dtype=np.int64)
        cdef const int64_t[::1] vloc = np.ascontiguousarray(locs, dtype=np.int64)
        cdef Py_ssize_t n = vloc.shape[0], i, j
        cdef int64_t a, sid
        cdef vector[uint8_t] kept
        kept.assign(vold.shape[0], 0)
        out = np.empty(n - 1 if n > 1 else 0, dtype=np.int64)
        cdef int64_t[::1] vo = out
        for i in range(n - 1):
            a = vsrc[i]
            if a >= 0 and vsrc[i + 1] == a + 1:
                vo[i] = vold[a]
                kept[a] = 1
            else:
                vo[i] = -1
        for j in range(vold.shape[0]):
            if not kept[j]:
                self._kill(vold[j])
                self._unplace(vold[j])
        for i in range(n - 1):
            if vo[i] < 0:
                sid = self._append(_cx(vloc[i], grid), _cy(vloc[i], grid),
                                   _cx(vloc[i + 1], grid), _cy(vloc[i + 1], grid), tid, i)
                self._place(sid)
                vo[i] = sid
        for i in range(n - 1):
            self.recs[vo[i]].pos = <int32_t>i
        return out

    def is_alive(self, long long sid):
        return 0 <= sid < <long long>self.alive.size() and self.alive[sid] != 0

    def segment(self, long long sid):
        if not self.is_alive(sid):
            raise KeyError(f"segment {sid} is not stored")
        cdef SegRec r = self.recs[sid]
        return (r.ax, r.ay, r.bx, r.by, r.tid, r.pos)

    def reset_counters(self):
        self.n_cells = 0
        self.n_dists = 0

    def clear(self):
        """Drop every segment; the store then behaves as newly built."""
        self._clear_cells()
        self.recs.clear()
        self.alive.clear()
        self.n_alive = 0

    cdef void _clear_cells(self) except *:
        pass

    cdef _begin(self, double qx, double qy, bint exclude_endpoint, mask):
        cdef const uint8_t[::1] mv
        self.q.qx = qx
        self.q.qy = qy
        self.q.excl = exclude_endpoint
        self.q.n_dists = 0
        self.q.base = self.recs.data()
        self.q.mask = NULL
        self._mask_ref = None
        if mask is not None:
            arr = np.ascontiguousarray(mask, dtype=np.uint8)
            self._mask_ref = arr
            if arr.shape[0] > 0:
                mv = arr
                self.q.mask = &mv[0]

    cdef _end(self):
        self.n_dists += self.q.n_dists
        self.q.mask = NULL
        self._mask_ref = None


cdef class LinearCore(_Store):
    """No index at all: every query scans every stored segment."""

    def search(self, double qx, double qy, int k, int mode=0, int strategy=0,
               bint exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        cdef _Acc acc = _Acc(k, mode)
        self._begin(qx, qy, exclude_endpoint, mask)
        cdef int64_t sid, n = self.recs.size()
        cdef const SegRec* r = self.recs.data()
        cdef const uint8_t* alive = self.alive.data()
        self.n_cells += 1
        for sid in range(n):
            if alive[sid]:
                _scan(&self.q, &r[sid], acc)
        self._end()
        return acc.result()


cdef class UGCore(_Store):
    """Single-level uniform grid; a segment is listed in every cell of its bbox."""
    cdef public int g
    cdef vector[vector[int64_t]] cells
    cdef vector[int32_t] stamp
    cdef int32_t cur_stamp

    def __cinit__(self, int granularity):
        self.g = granularity
        self.cells.resize(<size_t>granularity * <size_t>granularity)
        self.cur_stamp = 0

    cdef void _place(self, int64_t sid) except *:
        cdef int g = self.g
        cdef int cxa = _finest_cell(self.recs[sid].ax, g), cya = _finest_cell(self.recs[sid].ay, g)
        cdef int cxb = _finest_cell(self.recs[sid].bx, g), cyb = _finest_cell(self.recs[sid].by, g)
        cdef int cx, cy
        for cx in range(min(cxa, cxb), max(cxa, cxb) + 1):
            for cy in range(min(cya, cyb), max(cya, cyb) + 1):
                self.cells[<size_t>cx * g + cy].push_back(sid)
        self.stamp.push_back(0)

    cdef void _clear_cells(self) except *:
        cdef int64_t sid
        for sid in range(<int64_t>self.alive.size()):
            if self.alive[sid]:
                self._unplace(sid)
        self.stamp.clear()

    cdef void _unplace(self, int64_t sid) except *:
        cdef int g = self.g
        cdef int cxa = _finest_cell(self.recs[sid].ax, g), cya = _finest_cell(self.recs[sid].ay, g)
        cdef int cxb = _finest_cell(self.recs[sid].bx, g), cyb = _finest_cell(self.recs[sid].by, g)
        cdef int cx, cy
        cdef Py_ssize_t j, n
        for cx in range(min(cxa, cxb), max(cxa, cxb) + 1):
            for cy in range(min(cya, cyb), max(cya, cyb) + 1):
                n = self.cells[<size_t>cx * g + cy].size()
                for j in range(n):
                    if self.cells[<size_t>cx * g + cy][j] == sid:
                        self.cells[<size_t>cx * g + cy][j] = self.cells[<size_t>cx * g + cy][n - 1]
                        self.cells[<size_t>cx * g + cy].pop_back()
                        break

    cdef void _scan_cell(self, int cx, int cy, _Acc acc) noexcept:
        cdef size_t code = <size_t>cx * self.g + cy
        cdef Py_ssize_t j, n = self.cells[code].size()
        cdef int64_t sid
        if n == 0:
            return
        self.n_cells += 1
        for j in range(n):
            sid = self.cells[code][j]
            if self.stamp[sid] == self.cur_stamp:
                continue
            self.stamp[sid] = self.cur_stamp
            _scan(&self.q, &self.recs[sid], acc)

    cdef void _ring_visit(self, int cx, int cy, _Acc acc) noexcept:
        cdef int g = self.g
        cdef double md
        if acc.full():
            md = _rect_mindist(self.q.qx, self.q.qy, <double>cx / g, <double>cy / g,
                               <double>(cx + 1) / g, <double>(cy + 1) / g)
            if md > acc.theta():
                return
        self._scan_cell(cx, cy, acc)

    def search(self, double qx, double qy, int k, int mode=0, int strategy=0,
               bint exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        cdef _Acc acc = _Acc(k, mode)
        self._begin(qx, qy, exclude_endpoint, mask)
        self.cur_stamp += 1
        cdef int g = self.g
        cdef int cqx = _finest_cell(qx, g), cqy = _finest_cell(qy, g)
        cdef int ring = 0, x, y, x0, x1, y0, y1
        cdef double lb, side
        cdef bint any_side
        while True:
            if ring > 0:
                any_side = False
                lb = INFINITY
                if cqx - ring >= 0:
                    side = qx - <double>(cqx - ring + 1) / g
                    lb = min(lb, side)
                    any_side = True
                if cqx + ring < g:
                    side = <double>(cqx + ring) / g - qx
                    lb = min(lb, side)
                    any_side = True
                if cqy - ring >= 0:
                    side = qy - <double>(cqy - ring + 1) / g
                    lb = min(lb, side)
                    any_side = True
                if cqy + ring < g:
                    side = <double>(cqy + ring) / g - qy
                    lb = min(lb, side)
                    any_side = True
                if not any_side:
                    break
                if lb < 0.0:
                    lb = 0.0
                if acc.full() and lb > acc.theta():
                    break
            if ring == 0:
                self._ring_visit(cqx, cqy, acc)
            else:
                x0 = cqx - ring
                x1 = cqx + ring
                y0 = cqy - ring
                y1 = cqy + ring
                for x in range(max(x0, 0), min(x1, g - 1) + 1):
                    if y0 >= 0:
                        self._ring_visit(x, y0, acc)
                    if y1 < g:
                        self._ring_visit(x, y1, acc)
                for y in range(max(y0 + 1, 0), min(y1 - 1, g - 1) + 1):
                    if x0 >= 0:
                        self._ring_visit(x0, y, acc)
                    if x1 < g:
                        self._ring_visit(x1, y, acc)
            ring += 1
        self._end()
        return acc.result()


ctypedef pair[double, pair[int64_t, int32_t]] QItem


cdef class HGCore(_Store):
    """Hierarchical grid: levels 1..H with 2**(h-1) cells per side.

    Segments live in their best-fit cell. A cell is materialised while its
    subtree holds at least one segment; the root always exists. Cells are
    addressed through a dense directory indexed by (level, ix, iy).
    """
    cdef public int levels
    cdef public int g
    cdef vector[int64_t] offset      # directory offset per level (1-based)
    cdef vector[int32_t] directory   # code -> cell id or -1
    cdef vector[int32_t] c_level, c_ix, c_iy
    cdef vector[int64_t] c_count
    cdef vector[vector[SegRec]] c_segs  # copies, scanned contiguously
    cdef vector[int32_t] c_free
    cdef vector[int32_t] c_stamp
    cdef int32_t cur_stamp
    cdef vector[int32_t] s_cell
    cdef vector[int64_t] s_slot

    def __cinit__(self, int levels):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if levels > 13:
            raise ValueError("at most 13 levels (4096 finest cells per side)")
        self.levels = levels
        self.g = 1 << (levels - 1)
        cdef int h
        cdef int64_t off = 0
        self.offset.push_back(0)
        for h in range(1, levels + 1):
            self.offset.push_back(off)
            off += (<int64_t>1 << (h - 1)) * (<int64_t>1 << (h - 1))
        self.directory.assign(off, -1)
        self.cur_stamp = 0
        self._new_cell(1, 0, 0)

    cdef inline int64_t _code(self, int level, int ix, int iy) noexcept:
        return self.offset[level] + (<int64_t>ix << (level - 1)) + iy

    cdef int32_t _new_cell(self, int level, int ix, int iy):
        cdef int32_t cid
        if self.c_free.size() > 0:
            cid = self.c_free.back()
            self.c_free.pop_back()
            self.c_level[cid] = level
            self.c_ix[cid] = ix
            self.c_iy[cid] = iy
            self.c_count[cid] = 0
            self.c_segs[cid].clear()
            self.c_stamp[cid] = 0
        else:
            cid = self.c_level.size()
            self.c_level.push_back(level)
            self.c_ix.push_back(ix)
            self.c_iy.push_back(iy)
            self.c_count.push_back(0)
            self.c_segs.push_back(vector[SegRec]())
            self.c_stamp.push_back(0)
        self.directory[self._code(level, ix, iy)] = cid
        return cid

    cdef inline int32_t _lookup(self, int level, int ix, int iy) noexcept:
        return self.directory[self._code(level, ix, iy)]

    cdef void _best_fit(self, double ax, double ay, double bx, double by,
                        int* level, int* ix, int* iy) noexcept:
        cdef int H = self.levels, g = self.g
        cdef int cxa = _finest_cell(ax, g), cya = _finest_cell(ay, g)
        cdef int cxb = _finest_cell(bx, g), cyb = _finest_cell(by, g)
        cdef unsigned int diff = (cxa ^ cxb) | (cya ^ cyb)
        cdef int lv = H - _bit_length(diff)
        cdef int shift = H - lv
        level[0] = lv
        ix[0] = cxa >> shift
        iy[0] = cya >> shift

    def best_fit(self, double ax, double ay, double bx, double by):
        cdef int lv, ix, iy
        self._best_fit(ax, ay, bx, by, &lv, &ix, &iy)
        return lv, ix, iy

    cdef void _place(self, int64_t sid) except *:
        cdef int lv, ix, iy
        cdef SegRec* r = &self.recs[sid]
        self._best_fit(r.ax, r.ay, r.bx, r.by, &lv, &ix, &iy)
        cdef int32_t cid = self._lookup(lv, ix, iy)
        if cid < 0:
            cid = self._new_cell(lv, ix, iy)
        self.s_cell.push_back(cid)
        self.s_slot.push_back(self.c_segs[cid].size())
        self.c_segs[cid].push_back(r[0])
        self.c_count[cid] += 1
        while lv > 1:
            lv -= 1
            ix >>= 1
            iy >>= 1
            cid = self._lookup(lv, ix, iy)
            if cid < 0:
                cid = self._new_cell(lv, ix, iy)
            self.c_count[cid] += 1

    cdef void _unplace(self, int64_t sid) except *:
        cdef int32_t cid = self.s_cell[sid]
        cdef int64_t slot = self.s_slot[sid]
        cdef SegRec last = self.c_segs[cid].back()
        self.c_segs[cid][slot] = last
        self.s_slot[last.sid] = slot
        self.c_segs[cid].pop_back()
        self.s_cell[sid] = -1
        cdef int lv = self.c_level[cid], ix = self.c_ix[cid], iy = self.c_iy[cid]
        while True:
            self.c_count[cid] -= 1
            if self.c_count[cid] == 0 and lv > 1:
                self.directory[self._code(lv, ix, iy)] = -1
                self.c_free.push_back(cid)
            if lv == 1:
                break
            lv -= 1
            ix >>= 1
            iy >>= 1
            cid = self._lookup(lv, ix, iy)

    cdef void _clear_cells(self) except *:
        cdef int32_t cid
        cdef int64_t code
        for cid in range(<int32_t>self.c_level.size()):
            code = self._code(self.c_level[cid], self.c_ix[cid], self.c_iy[cid])
            if self.directory[code] == cid:
                self.directory[code] = -1
        self.c_level.clear()
        self.c_ix.clear()
        self.c_iy.clear()
        self.c_count.clear()
        self.c_segs.clear()
        self.c_free.clear()
        self.c_stamp.clear()
        self.s_cell.clear()
        self.s_slot.clear()
        self._new_cell(1, 0, 0)

    def cell_of(self, long long sid):
        if not self.is_alive(sid):
            raise KeyError(f"segment {sid} is not stored")
        cdef int32_t cid = self.s_cell[sid]
        return (self.c_level[cid], self.c_ix[cid], self.c_iy[cid])

    def snapshot(self):
        """Materialised cells as sorted (level, ix, iy, count, sorted sids)."""
        out = []
        cdef int lv, ix, iy, r
        cdef int32_t cid
        for lv in range(1, self.levels + 1):
            r = 1 << (lv - 1)
            for ix in range(r):
                for iy in range(r):
                    cid = self._lookup(lv, ix, iy)
                    if cid >= 0:
                        out.append((lv, ix, iy, self.c_count[cid],
                                    tuple(sorted([rec.sid for rec in self.c_segs[cid]]))))
        return sorted(out)

    def mindist(self, double qx, double qy, int level, int ix, int iy):
        return self._mindist(level, ix, iy, qx, qy)

    cdef inline double _mindist(self, int level, int ix, int iy, double qx, double qy) noexcept:
        cdef double r = <double>(1 << (level - 1))
        return _rect_mindist(qx, qy, ix / r, iy / r, (ix + 1) / r, (iy + 1) / r)

    cdef void _visit(self, int32_t cid, _Acc acc) noexcept:
        cdef Py_ssize_t j, n = self.c_segs[cid].size()
        cdef const SegRec* r = self.c_segs[cid].data()
        self.n_cells += 1
        for j in range(n):
            _scan(&self.q, &r[j], acc)

    cdef int _children(self, int32_t cid, int32_t* out) noexcept:
        cdef int lv = self.c_level[cid]
        cdef int n = 0, dx, dy
        cdef int32_t ch
        if lv >= self.levels:
            return 0
        for dx in range(2):
            for dy in range(2):
                ch = self._lookup(lv + 1, 2 * self.c_ix[cid] + dx, 2 * self.c_iy[cid] + dy)
                if ch >= 0:
                    out[n] = ch
                    n += 1
        return n

    cdef int32_t _locate(self, double qx, double qy) noexcept:
        cdef int H = self.levels
        cdef int fx = _finest_cell(qx, self.g), fy = _finest_cell(qy, self.g)
        cdef int lv, shift
        cdef int32_t cid
        for lv in range(H, 0, -1):
            shift = H - lv
            cid = self._lookup(lv, fx >> shift, fy >> shift)
            if cid >= 0:
                return cid
        return self._lookup(1, 0, 0)

    def search(self, double qx, double qy, int k, int mode=0, int strategy=STRATEGY_BUD,
               bint exclude_endpoint=False, mask=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        if strategy not in (STRATEGY_TOPDOWN, STRATEGY_BOTTOMUP, STRATEGY_BUD):
            raise ValueError(f"unknown strategy {strategy}")
        cdef _Acc acc = _Acc(k, mode)
        self._begin(qx, qy, exclude_endpoint, mask)
        self.cur_stamp += 1
        if strategy == STRATEGY_TOPDOWN:
            self._topdown(acc)
        else:
            self._bottom_up(acc, strategy == STRATEGY_BUD)
        self._end()
        return acc.result()

    cdef void _topdown(self, _Acc acc) noexcept:
        cdef priority_queue[QItem] heap
        cdef int64_t seq = 0
        cdef QItem it
        cdef int32_t cid, kids[4]
        cdef int nk, j
        cdef double md
        heap.push(QItem(-0.0, pair[int64_t, int32_t](0, self._lookup(1, 0, 0))))
        while not heap.empty():
            it = heap.top()
            heap.pop()
            md = -it.first
            cid = it.second.second
            if acc.full() and md > acc.theta():
                break
            self._visit(cid, acc)
            nk = self._children(cid, kids)
            for j in range(nk):
                seq += 1
                heap.push(QItem(-self._mindist(self.c_level[kids[j]], self.c_ix[kids[j]],
                                               self.c_iy[kids[j]], self.q.qx, self.q.qy),
                                pair[int64_t, int32_t](-seq, kids[j])))

    cdef void _bottom_up(self, _Acc acc, bint switch_at_root) noexcept:
        cdef vector[pair[int32_t, double]] stack
        cdef priority_queue[QItem] heap
        cdef int64_t seq = 0
        cdef int32_t root = self._lookup(1, 0, 0)
        cdef int32_t start = self._locate(self.q.qx, self.q.qy)
        cdef int32_t cid, pid, kids[4]
        cdef double kmd[4]
        cdef double md, tmd
        cdef int nk, nv, j, i, lv
        cdef int32_t tcid
        cdef bint root_access = False
        cdef pair[int32_t, double] top
        cdef QItem it
        if start == root and switch_at_root:
            root_access = True
            heap.push(QItem(-0.0, pair[int64_t, int32_t](0, root)))
        else:
            stack.push_back(pair[int32_t, double](start, 0.0))
        while (not heap.empty()) if root_access else (stack.size() > 0):
            if not root_access:
                top = stack.back()
                stack.pop_back()
                cid = top.first
                md = top.second
                if acc.full() and md > acc.theta():
                    continue
            else:
                it = heap.top()
                heap.pop()
                md = -it.first
                cid = it.second.second
                if acc.full() and md > acc.theta():
                    break
            if self.c_stamp[cid] == self.cur_stamp:
                continue
            self.c_stamp[cid] = self.cur_stamp
            self._visit(cid, acc)
            lv = self.c_level[cid]
            if not root_access and lv > 1:
                pid = self._lookup(lv - 1, self.c_ix[cid] >> 1, self.c_iy[cid] >> 1)
                if self.c_stamp[pid] != self.cur_stamp:
                    if lv - 1 == 1 and switch_at_root:
                        root_access = True
                        seq += 1
                        heap.push(QItem(-0.0, pair[int64_t, int32_t](-seq, pid)))
                    else:
                        stack.push_back(pair[int32_t, double](pid, 0.0))
            nk = self._children(cid, kids)
            nv = 0
            for j in range(nk):
                if self.c_stamp[kids[j]] != self.cur_stamp:
                    kids[nv] = kids[j]
                    kmd[nv] = self._mindist(self.c_level[kids[j]], self.c_ix[kids[j]],
                                            self.c_iy[kids[j]], self.q.qx, self.q.qy)
                    nv += 1
            if root_access:
                for j in range(nv):
                    seq += 1
                    heap.push(QItem(-kmd[j], pair[int64_t, int32_t](-seq, kids[j])))
            else:
                # stable sort, farthest first, so the nearest child pops next
                for j in range(1, nv):
                    tmd = kmd[j]
                    tcid = kids[j]
                    i = j
                    while i > 0 and kmd[i - 1] < tmd:
                        kmd[i] = kmd[i - 1]
                        kids[i] = kids[i - 1]
                        i -= 1
                    kmd[i] = tmd
                    kids[i] = tcid
                for j in range(nv):
                    stack.push_back(pair[int32_t, double](kids[j], kmd[j]))
