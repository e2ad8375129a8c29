"""Privacy and utility metrics for an original / anonymised dataset pair.

Datasets are paired by position: trajectory i of the anonymised dataset is
the published version of trajectory i of the original.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import jensenshannon, pdist

from .geo import center_xy
from .signature import rank_dataset


def _signatures(dataset, m):
    return [(r.keys[:m].tolist(), r.weight[:m].tolist()) for r in rank_dataset(dataset)]


def linking_accuracy_spatial(reference, anonymized, m=10):
    """Fraction of anonymised trajectories whose best signature match is their owner.

    The score between two trajectories is the sum, over locations in both
    top-m signatures, of the smaller of the two weights. Each anonymised
    trajectory is linked to the highest-scoring reference trajectory; ties
    go to the earliest reference trajectory.
    """
    if len(reference) != len(anonymized):
        raise ValueError("datasets must be paired")
    n = len(reference)
    if n == 0:
        return 0.0
    inverted = {}
    for i, (keys, ws) in enumerate(_signatures(reference, m)):
        for k, w in zip(keys, ws):
            inverted.setdefault(k, []).append((i, w))
    hits = 0
    for j, (keys, ws) in enumerate(_signatures(anonymized, m)):
        scores = np.zeros(n, dtype=np.float64)
        for k, w in zip(keys, ws):
            for i, wr in inverted.get(k, ()):
                scores[i] += min(w, wr)
        if int(np.argmax(scores)) == j:
            hits += 1
    return hits / n


def info_loss(original, anonymized):
    """One minus the share of original samples kept, as multiset overlap per trajectory."""
    if len(original) != len(anonymized):
        raise ValueError("datasets must be paired")
    total = sum(len(t) for t in original)
    if total == 0:
        return 0.0
    kept = 0
    for a, b in zip(original, anonymized):
        ka, ca = np.unique(a.locs, return_counts=True)
        kb, cb = np.unique(b.locs, return_counts=True)
        _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
        kept += int(np.minimum(ca[ia], cb[ib]).sum())
    return 1.0 - kept / total


def js_divergence(p, q):
    """Jensen-Shannon divergence in bits between two (unnormalised) histograms."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.sum() == 0 and q.sum() == 0:
        return 0.0
    if p.sum() == 0 or q.sum() == 0:
        return 1.0
    v = float(jensenshannon(p, q, base=2)) ** 2
    return min(max(v, 0.0), 1.0)


def diameter(traj):
    """Largest distance between two points of the trajectory."""
    pts = np.unique(traj.locs)
    if pts.size < 2:
        return 0.0
    x, y = center_xy(pts, traj.grid)
    xy = np.column_stack([x, y])
    if pts.size > 3:
        try:
            xy = xy[ConvexHull(xy).vertices]
        except QhullError:
            pass  # collinear: fall back to all points
    return float(pdist(xy).max())


def diameter_divergence(original, anonymized, bins=20):
    da = np.array([diameter(t) for t in original])
    db = np.array([diameter(t) for t in anonymized])
    pooled = np.concatenate([da, db])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        return 0.0
    ha, _ = np.histogram(da, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(db, bins=bins, range=(lo, hi))
    return js_divergence(ha, hb)


def _trip_codes(dataset, grid):
    codes = []
    for t in dataset:
        x, y = center_xy(t.locs[[0, -1]], t.grid)
        cx = np.minimum((x * grid).astype(np.int64), grid - 1)
        cy = np.minimum((y * grid).astype(np.int64), grid - 1)
        start = cx[0] * grid + cy[0]
        end = cx[1] * grid + cy[1]
        codes.append(start * grid * grid + end)
    return np.array(codes, dtype=np.int64)


def trip_divergence(original, anonymized, grid=8):
    """JS divergence of (start cell, end cell) pairs on a coarse grid."""
    a = _trip_codes(original, grid)
    b = _trip_codes(anonymized, grid)
    support = np.union1d(a, b)
    ha = np.bincount(np.searchsorted(support, a), minlength=support.size)
    hb = np.bincount(np.searchsorted(support, b), minlength=support.size)
    return js_divergence(ha, hb)


def top_pairs(dataset, k):
    """The k most frequent consecutive location pairs, by count then (a, b)."""
    if not dataset:
        return set()
    g = dataset[0].grid
    span = g * g
    codes = [t.locs[:-1] * span + t.locs[1:] for t in dataset if len(t) > 1]
    if not codes:
        return set()
    uniq, counts = np.unique(np.concatenate(codes), return_counts=True)
    # uniq is ascending, i.e. ordered by (a, b); a stable sort on -count keeps that
    order = np.argsort(-counts, kind="stable")[:k]
    return {(int(c // span), int(c % span)) for c in uniq[order].tolist()}


def frequent_pattern_f1(original, anonymized, k=50):
    a = top_pairs(original, k)
    b = top_pairs(anonymized, k)
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def metric_report(original, anonymized, m=10, bins=20, te_grid=8, ffp_k=50):
    return {
        "la_s": linking_accuracy_spatial(original, anonymized, m),
        "inf": info_loss(original, anonymized),
        "de": diameter_divergence(original, anonymized, bins),
        "te": trip_divergence(original, anonymized, te_grid),
        "ffp": frequent_pattern_f1(original, anonymized, ffp_k),
    }
