"""Point and trajectory frequencies, signature ranking and point lists.

A point's weight in a trajectory is its share of the trajectory's samples
times ``ln(|D| / tf)``: frequent within the trajectory, rare across the
dataset. The top-m ranked points are the trajectory's signature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geo import Location, Trajectory


@dataclass
class PFDistribution:
    trajectory_id: int
    keys: np.ndarray  # sorted distinct location keys
    counts: np.ndarray

    def as_dict(self):
        return dict(zip(self.keys.tolist(), self.counts.tolist()))

    def get(self, key, default=0):
        i = np.searchsorted(self.keys, key)
        if i < self.keys.size and self.keys[i] == key:
            return int(self.counts[i])
        return default


@dataclass
class TFDistribution:
    keys: np.ndarray  # sorted
    counts: np.ndarray
    n_trajectories: int

    def as_dict(self):
        return dict(zip(self.keys.tolist(), self.counts.tolist()))

    def get(self, key, default=0):
        i = np.searchsorted(self.keys, key)
        if i < self.keys.size and self.keys[i] == key:
            return int(self.counts[i])
        return default

    def lookup(self, keys):
        """Vectorised ``get`` for keys known to occur in the dataset."""
        return self.counts[np.searchsorted(self.keys, keys)]


@dataclass(frozen=True)
class WeightedPoint:
    location: Location
    pf: int
    weight: float


@dataclass
class RankedPoints:
    """Ranked distinct points of one trajectory (parallel arrays)."""
    keys: np.ndarray
    pf: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return int(self.keys.size)


@dataclass
class SignatureSet:
    ranked: list  # RankedPoints per trajectory
    m: int

    def signature(self, i):
        return self.ranked[i].keys[: self.m]


@dataclass
class CandidateSet:
    points: frozenset

    @property
    def d(self):
        return len(self.points)

    def sorted_keys(self):
        return np.array(sorted(self.points), dtype=np.int64)


def compute_pf(traj: Trajectory, trajectory_id=0):
    keys, counts = np.unique(traj.locs, return_counts=True)
    return PFDistribution(trajectory_id, keys, counts.astype(np.int64))


def compute_tf(dataset: Sequence[Trajectory]):
    if not dataset:
        return TFDistribution(np.empty(0, np.int64), np.empty(0, np.int64), 0)
    distinct = np.concatenate([np.unique(t.locs) for t in dataset])
    keys, counts = np.unique(distinct, return_counts=True)
    return TFDistribution(keys, counts.astype(np.int64), len(dataset))


class _LogTable:
    """``ln(n / l)`` cached per distinct l, so every caller gets the same float."""

    def __init__(self, n):
        self.n = n
        self._cache = {}

    def __call__(self, ls):
        cache = self._cache
        out = np.empty(len(ls), dtype=np.float64)
        for i, l in enumerate(ls.tolist()):
            v = cache.get(l)
            if v is None:
                v = cache[l] = math.log(self.n / l)
            out[i] = v
        return out


def _rank(keys, pf, length, tf_vals, logs):
    weight = (pf / length) * logs(tf_vals)
    order = np.lexsort((keys, -pf, -weight))
    return RankedPoints(keys[order], pf[order], weight[order])


def weigh_and_rank(traj: Trajectory, pf: PFDistribution, tf: TFDistribution, n_trajectories):
    """Ranked list of ``WeightedPoint``: weight desc, then pf desc, then key asc."""
    r = _rank(pf.keys, pf.counts, len(traj), tf.lookup(pf.keys), _LogTable(n_trajectories))
    return [WeightedPoint(Location.from_key(k, traj.grid), int(c), float(w))
            for k, c, w in zip(r.keys.tolist(), r.pf.tolist(), r.weight.tolist())]


def rank_dataset(dataset: Sequence[Trajectory], tf: TFDistribution | None = None):
    """Ranked points of every trajectory, weighted within ``dataset``."""
    if tf is None:
        tf = compute_tf(dataset)
    logs = _LogTable(len(dataset))
    out = []
    for t in dataset:
        keys, counts = np.unique(t.locs, return_counts=True)
        out.append(_rank(keys, counts.astype(np.int64), len(t), tf.lookup(keys), logs))
    return out


def extract_signatures(dataset: Sequence[Trajectory], m: int):
    if m < 1:
        raise ValueError("m must be >= 1")
    ranked = rank_dataset(dataset)
    sigs = SignatureSet(ranked, m)
    pts = set()
    for r in ranked:
        pts.update(r.keys[:m].tolist())
    return sigs, CandidateSet(frozenset(pts))


def select_point_list(ranked: RankedPoints, candidates: CandidateSet, m: int, rng):
    """Up to 2m distinct keys: signature and candidate points first, then random fill.

    The ranked list is walked in order and a point is taken when it is within
    the top m or belongs to the candidate set. Remaining slots are filled by
    uniform sampling without replacement from the points not yet taken.
    """
    cap = min(2 * m, len(ranked))
    keys = ranked.keys.tolist()
    pts = candidates.points
    picked = []
    taken = np.zeros(len(keys), dtype=bool)
    for rank, k in enumerate(keys):
        if len(picked) >= cap:
            break
        if rank < m or k in pts:
            picked.append(k)
            taken[rank] = True
    need = cap - len(picked)
    if need > 0:
        rest = np.flatnonzero(~taken)
        fill = rng.choice(rest, size=need, replace=False)
        picked.extend(keys[i] for i in fill.tolist())
    return np.array(picked, dtype=np.int64)
