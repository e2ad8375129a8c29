"""Greedy trajectory edits that realise perturbed frequencies.

Inter-trajectory modification makes each candidate point's trajectory
frequency match its noisy target: it removes the point entirely from the
trajectories where that is cheapest, or inserts it once into the nearest
trajectories that lack it. Intra-trajectory modification makes each listed
point's frequency within one trajectory match its noisy target, deleting the
cheapest occurrences or inserting into the nearest segments.

Both accept ``hook(event: dict)``; it is called before every batch of edits
with the state the batch was chosen from.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edits import (EditKind, EditOp, UtilityLoss, complete_deletion_steps, delete_positions,
                    greedy_deletions, insert_many)
from .geo import Trajectory
from .index import SegmentIndex
from .mechanisms import PerturbedPF, PerturbedTF


@dataclass(frozen=True)
class ClampRecord:
    """A target that could not be met exactly, and why."""
    phase: str  # "global" or "local"
    key: int
    trajectory_id: int | None
    requested: int
    achieved: int
    reason: str

    def as_dict(self):
        return {"phase": self.phase, "key": self.key, "trajectory_id": self.trajectory_id,
                "requested": self.requested, "achieved": self.achieved, "reason": self.reason}


@dataclass
class ModifyResult:
    dataset: list
    loss: UtilityLoss
    clamps: list = field(default_factory=list)
    searches: int = 0


def _center(key, grid):
    return (key // grid + 0.5) / grid, (key % grid + 0.5) / grid


def _holders(dataset, keys):
    out = {int(k): set() for k in keys.tolist()}
    for tid, t in enumerate(dataset):
        u = np.unique(t.locs)
        for k in u[np.isin(u, keys)].tolist():
            out[k].add(tid)
    return out


def inter_modify(dataset, target: PerturbedTF, strategy="HG_+", backend=None, hook=None,
                 keep_ops=False):
    """Edit the dataset so every candidate point's trajectory frequency hits its target.

    All decreases run first, then all increases, each in ascending key
    order. The dataset-level index follows every edit.
    """
    D = list(dataset)
    n = len(D)
    loss = UtilityLoss(ops=[] if keep_ops else None)
    clamps = []
    if n == 0 or target.keys.size == 0:
        return ModifyResult(D, loss, clamps, 0)
    grid = D[0].grid
    holders = _holders(D, target.keys)
    pairs = list(zip(target.keys.tolist(), target.perturbed.tolist()))

    for key, want in pairs:
        have = len(holders[key])
        if want >= have:
            continue
        delta = have - want
        scored = []
        plans = {}
        for tid in sorted(holders[key]):
            t = D[tid]
            idx, steps = complete_deletion_steps(t, key)
            if idx.size == len(t):
                continue  # removing q would empty the trajectory
            total = 0.0
            for v in steps.tolist():
                total += v
            scored.append((total, tid))
            plans[tid] = (idx, steps)
        scored.sort()
        chosen = [tid for _, tid in scored[:delta]]
        if len(chosen) < delta:
            clamps.append(ClampRecord("global", key, None, want, have - len(chosen),
                                      "trajectories consisting only of the point"))
        if hook is not None:
            hook({"kind": "inter_delete", "key": key, "dataset": list(D), "delta": delta,
                  "chosen": list(chosen)})
        for tid in chosen:
            t = D[tid]
            idx, steps = plans[tid]
            new, src = delete_positions(t, idx)
            for j, (i, v) in enumerate(zip(idx.tolist(), steps.tolist())):
                op = EditOp(EditKind.DELETE, key, tid, i - j, v, (key,)) if keep_ops else None
                loss.record(tid, EditKind.DELETE, v, op)
            D[tid] = new
            holders[key].discard(tid)

    index = SegmentIndex(strategy, grid, backend)
    index.add_dataset(D)
    for key, want in pairs:
        have = len(holders[key])
        if want <= have:
            continue
        delta = want - have
        available = n - have
        if delta > available:
            clamps.append(ClampRecord("global", key, None, want, n,
                                      "fewer trajectories lack the point than requested"))
            delta = available
        if delta <= 0:
            continue
        mask = np.zeros(n, dtype=np.uint8)
        mask[list(holders[key])] = 1
        qx, qy = _center(key, grid)
        found = index.search(qx, qy, delta, trajectories=True, mask=mask)
        if hook is not None:
            hook({"kind": "inter_insert", "key": key, "dataset": list(D), "delta": delta,
                  "chosen": [(tid, pos, d) for d, tid, pos, _ in found]})
        for d, tid, pos, _ in found:
            t = D[tid]
            new, src = insert_many(t, key, [pos])
            if keep_ops:
                b = int(t.locs[pos + 1]) if len(t) > 1 else int(t.locs[0])
                op = EditOp(EditKind.INSERT, key, tid, pos, d, (int(t.locs[pos]), b))
            else:
                op = None
            loss.record(tid, EditKind.INSERT, d, op)
            index.sync_trajectory(tid, new, src)
            D[tid] = new
            holders[key].add(tid)
    return ModifyResult(D, loss, clamps, index.n_searches)


def intra_modify(traj: Trajectory, target: PerturbedPF, strategy="HG_+", backend=None,
                 hook=None, trajectory_id=0, keep_ops=False, index=None):
    """Edit one trajectory so each listed point occurs exactly its target number of times.

    Deletions for all listed points come first, then insertions; an index
    over the trajectory is built only if something is inserted. ``index``
    may be a SegmentIndex to clear and reuse instead of building a new one.
    """
    cur = traj
    tid = trajectory_id
    grid = traj.grid
    loss = UtilityLoss(ops=[] if keep_ops else None)
    clamps = []
    entries = list(zip(target.keys.tolist(), target.perturbed.tolist()))
    # listed keys are distinct, so editing one never changes another's count
    uniq, cnt = np.unique(cur.locs, return_counts=True)
    have_of = dict(zip(uniq.tolist(), cnt.tolist()))

    for key, want in entries:
        have = have_of.get(key, 0)
        if want >= have:
            continue
        delta = have - want
        allowed = min(delta, len(cur) - 1)
        if allowed < delta:
            clamps.append(ClampRecord("local", key, tid, want, have - allowed,
                                      "a trajectory keeps at least one point"))
        if allowed <= 0:
            continue
        removed, losses = greedy_deletions(cur, key, allowed)
        if hook is not None:
            hook({"kind": "intra_delete", "trajectory_id": tid, "key": key, "trajectory": cur,
                  "chosen": list(removed)})
        if keep_ops:
            gone = []
            for i, v in zip(removed, losses):
                pos = i - sum(1 for r in gone if r < i)
                loss.record(tid, EditKind.DELETE, v, EditOp(EditKind.DELETE, key, tid, pos, v,
                                                             (key,)))
                gone.append(i)
        else:
            loss.record_many(tid, EditKind.DELETE, losses)
        cur, _ = delete_positions(cur, removed)
        have_of[key] = have - allowed

    built = False
    for key, want in entries:
        have = have_of.get(key, 0)
        if want <= have:
            continue
        if not built:
            if index is None:
                index = SegmentIndex(strategy, grid, backend)
            else:
                index.clear()
            index.add_trajectory(0, cur)
            built = True
        qx, qy = _center(key, grid)
        delta = want - have
        while delta > 0:
            # never next to an existing copy of the point; fall back only when
            # every segment already touches it
            found = index.search(qx, qy, delta, exclude_endpoint=True)
            if not found:
                found = index.search(qx, qy, 1)
            if hook is not None:
                hook({"kind": "intra_insert", "trajectory_id": tid, "key": key,
                      "trajectory": cur, "chosen": [(pos, d) for d, _, pos, _ in found]})
            hosts = [pos for _, _, pos, _ in found]
            if keep_ops:
                done = []
                for d, _, pos, _ in found:
                    # position as seen when the batch is replayed one op at a time
                    shift = sum(1 for h in done if h < pos)
                    b = int(cur.locs[pos + 1]) if len(cur) > 1 else int(cur.locs[0])
                    op = EditOp(EditKind.INSERT, key, tid, pos + shift, d,
                                (int(cur.locs[pos]), b))
                    done.append(pos)
                    loss.record(tid, EditKind.INSERT, d, op)
            else:
                loss.record_many(tid, EditKind.INSERT, [d for d, _, _, _ in found])
            new, src = insert_many(cur, key, hosts)
            index.sync_trajectory(0, new, src)
            cur = new
            delta -= len(found)
    searches = index.n_searches if built else 0
    return ModifyResult([cur], loss, clamps, searches)
