"""Seeded synthetic trajectory corpus.

Every object travels between places in straight, evenly sampled legs and
dwells at each place it reaches. Places are a few shared hotspots, which
every object tours at least once, and three private anchors per object. The anchors
are the planted signatures: frequent in their owner's trajectory and absent
from every other one.
"""
from __future__ import annotations

import numpy as np

from .geo import DEFAULT_GRID, BBox
from .io import build_dataset, write_samples

DEFAULT_BBOX = BBox(116.0, 39.6, 116.8, 40.2)


def _leg(a, b, step):
    n = max(int(np.ceil(np.hypot(*(b - a)) / step)), 1)
    f = np.arange(1, n + 1)[:, None] / n
    return a + (b - a) * f


# dwell cluster at a hotspot: its cell and the three cells above/right of it
_CLUSTER = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])


def _cluster_walk(rng, center, n, cell, stay=0.6):
    # sweep all four cells first so every visitor covers the whole cluster
    idx = np.empty(max(n, 4), dtype=np.int64)
    idx[:4] = np.arange(4)
    cur = 3
    for i in range(4, idx.size):
        if rng.random() >= stay:
            cur = int(rng.integers(4))
        idx[i] = cur
    return center + _CLUSTER[idx] * cell


def generate_rows(n_objects, avg_len, seed=0, grid=DEFAULT_GRID, n_hotspots=4, n_anchors=3,
                  hotspot_prob=0.7, bbox: BBox = DEFAULT_BBOX):
    """Samples as (obj_id, timestamp, lon, lat) rows, objects in order."""
    if n_objects < 1 or avg_len < 1:
        raise ValueError("n_objects and avg_len must be >= 1")
    rng = np.random.default_rng(seed)
    cell = 1.0 / grid
    hotspots = (np.floor(rng.uniform(0.35, 0.65, size=(n_hotspots, 2)) * grid) + 0.5) * cell
    step = 4.0 * cell
    rows = []
    for obj in range(n_objects):
        oid = f"obj{obj:05d}"
        anchors = (np.floor(rng.uniform(0.05, 0.95, size=(n_anchors, 2)) * grid) + 0.5) * cell
        target = max(1, int(round(avg_len * rng.uniform(0.7, 1.3))))
        here = anchors[0]
        here_id = ("a", 0)
        pts = [here[None, :]]
        total = 1
        tour = rng.permutation(n_hotspots).tolist()
        tour_end = None
        while total < target or tour:
            if tour or rng.random() < hotspot_prob:
                j = tour.pop() if tour else int(rng.integers(n_hotspots))
                nxt_id, nxt = ("h", j), hotspots[j]
                dwell = lambda: _cluster_walk(rng, nxt, int(rng.integers(8, 20)), cell)
            else:
                j = int(rng.integers(n_anchors))
                nxt_id, nxt = ("a", j), anchors[j]
                dwell = lambda: np.repeat(nxt[None, :], int(rng.integers(5, 15)), axis=0)
            if nxt_id != here_id:
                pts.append(_leg(here, nxt, step))
                total += len(pts[-1])
            pts.append(dwell())
            total += len(pts[-1])
            here, here_id = nxt, nxt_id
            if not tour and tour_end is None:
                tour_end = total
        # every object completes the hotspot tour, even past its target length
        xy = np.concatenate(pts)[:max(target, tour_end)]
        lon, lat = bbox.from_unit(xy[:, 0], xy[:, 1])
        t0 = 1_200_000_000 + int(rng.integers(0, 86_400))
        ts = t0 + 30 * np.arange(xy.shape[0])
        rows.extend(zip([oid] * xy.shape[0], ts.tolist(), lon.tolist(), lat.tolist()))
    return rows


def generate_dataset(n_objects, avg_len, seed=0, grid=DEFAULT_GRID, **kw):
    """Synthetic corpus as (dataset, bbox), snapped within the generator bbox."""
    bbox = kw.pop("bbox", DEFAULT_BBOX)
    rows = generate_rows(n_objects, avg_len, seed, grid, bbox=bbox, **kw)
    groups = {}
    for oid, t, lon, lat in rows:
        groups.setdefault(oid, []).append((float(t), lon, lat))
    dataset, _ = build_dataset(groups, grid, bbox)
    return dataset, bbox


def write_corpus(path, n_objects, avg_len, seed=0, grid=DEFAULT_GRID, **kw):
    rows = generate_rows(n_objects, avg_len, seed, grid, **kw)
    write_samples(path, rows)
    return len(rows)
