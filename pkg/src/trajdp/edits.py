"""Point insertion and deletion on trajectories, with their utility losses.

Inserting q into segment <a, b> costs the distance from q to the segment.
Deleting q from <a, q, b> costs the distance from q to the reconnection
segment <a, b>; at either end of a trajectory it costs the distance to the
single surviving neighbour.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .geo import Location, Segment, Trajectory


class InvalidEditError(ValueError):
    """The edit no longer matches the trajectory it was planned against."""


class NothingToDeleteError(InvalidEditError):
    """The point does not occur in the trajectory."""


class EditKind(str, enum.Enum):
    INSERT = "insert"
    DELETE = "delete"


@dataclass(frozen=True)
class EditOp:
    """One planned edit.

    For an insertion ``position`` is the index of the host segment (the new
    point lands at ``position + 1``); for a deletion it is the index of the
    removed occurrence. ``anchor`` holds the location keys expected at that
    spot so stale plans are detected.
    """
    kind: EditKind
    target: int
    trajectory_id: int
    position: int
    loss: float
    anchor: tuple = ()


@dataclass
class UtilityLoss:
    total: float = 0.0
    per_trajectory: dict = field(default_factory=dict)
    n_insert: int = 0
    n_delete: int = 0
    ops: list | None = None  # kept only when requested

    def record(self, tid, kind, loss, op=None):
        self.total += loss
        self.per_trajectory[tid] = self.per_trajectory.get(tid, 0.0) + loss
        if kind is EditKind.INSERT:
            self.n_insert += 1
        else:
            self.n_delete += 1
        if self.ops is not None and op is not None:
            self.ops.append(op)

    def record_many(self, tid, kind, losses):
        """Record several edits of one kind without keeping ops."""
        total = self.total
        t = self.per_trajectory.get(tid, 0.0)
        for v in losses:
            total += v
            t += v
        self.total = total
        self.per_trajectory[tid] = t
        if kind is EditKind.INSERT:
            self.n_insert += len(losses)
        else:
            self.n_delete += len(losses)

    def merge(self, other):
        self.total += other.total
        for k, v in other.per_trajectory.items():
            self.per_trajectory[k] = self.per_trajectory.get(k, 0.0) + v
        self.n_insert += other.n_insert
        self.n_delete += other.n_delete
        if self.ops is not None and other.ops is not None:
            self.ops.extend(other.ops)

    def as_dict(self):
        return {"total": self.total, "insertions": self.n_insert, "deletions": self.n_delete}


def _xy(key, grid):
    return (key // grid + 0.5) / grid, (key % grid + 0.5) / grid


def _key(q):
    return q.key if isinstance(q, Location) else int(q)


def insertion_loss(q, s: Segment):
    """Distance from q to segment s. ``q`` is a Location or a planar point."""
    if isinstance(q, Location):
        qx, qy = q.center
    else:
        qx, qy = float(q[0]), float(q[1])
    return kernels.seg_dist(qx, qy, s.a[0], s.a[1], s.b[0], s.b[1])


def deletion_loss(traj: Trajectory, i: int):
    """Loss of removing the point at index i of ``traj``."""
    n = len(traj)
    if not 0 <= i < n:
        raise IndexError(f"position {i} outside trajectory of length {n}")
    g = traj.grid
    locs = traj.locs
    qx, qy = _xy(int(locs[i]), g)
    if n == 1:
        return 0.0
    if i == 0:
        ax, ay = _xy(int(locs[1]), g)
        return kernels.seg_dist(qx, qy, ax, ay, ax, ay)
    if i == n - 1:
        ax, ay = _xy(int(locs[n - 2]), g)
        return kernels.seg_dist(qx, qy, ax, ay, ax, ay)
    ax, ay = _xy(int(locs[i - 1]), g)
    bx, by = _xy(int(locs[i + 1]), g)
    return kernels.seg_dist(qx, qy, ax, ay, bx, by)


def complete_deletion_steps(traj: Trajectory, q):
    """Per-occurrence losses of deleting every q, front to back.

    Each loss is evaluated on the trajectory with all earlier occurrences
    already removed. Returns (original indices, losses).
    """
    q = _key(q)
    idx, out = kernels.deletion_steps(traj.locs, q, traj.grid)
    if idx.size == 0:
        raise NothingToDeleteError(f"location {q} does not occur in trajectory")
    return idx, out


def complete_deletion_loss(q, traj: Trajectory):
    _, losses = complete_deletion_steps(traj, q)
    total = 0.0
    for v in losses.tolist():
        total += v
    return total


def apply(op: EditOp, traj: Trajectory):
    """Return a new trajectory with ``op`` applied."""
    n = len(traj)
    locs, times = traj.locs, traj.times
    if op.kind is EditKind.DELETE:
        i = op.position
        if not 0 <= i < n or int(locs[i]) != op.target:
            raise InvalidEditError(f"no occurrence of {op.target} at position {i}")
        if n == 1:
            raise InvalidEditError("cannot delete the last point of a trajectory")
        return traj.replace(np.delete(locs, i), np.delete(times, i))
    k = op.position
    if n == 1:
        if k != 0:
            raise InvalidEditError(f"segment {k} does not exist")
        if op.anchor and op.anchor != (int(locs[0]), int(locs[0])):
            raise InvalidEditError("host segment changed since planning")
        return traj.replace(np.append(locs, op.target), np.append(times, times[0]))
    if not 0 <= k < n - 1:
        raise InvalidEditError(f"segment {k} does not exist")
    if op.anchor and op.anchor != (int(locs[k]), int(locs[k + 1])):
        raise InvalidEditError("host segment changed since planning")
    t = 0.5 * (times[k] + times[k + 1])
    return traj.replace(np.insert(locs, k + 1, op.target), np.insert(times, k + 1, t))


def plan_insert(traj: Trajectory, q, k, trajectory_id=0):
    """EditOp inserting q into segment k (or after the only point)."""
    q = _key(q)
    g = traj.grid
    locs = traj.locs
    a = int(locs[k])
    b = int(locs[k + 1]) if len(traj) > 1 else a
    qx, qy = _xy(q, g)
    ax, ay = _xy(a, g)
    bx, by = _xy(b, g)
    return EditOp(EditKind.INSERT, q, trajectory_id, k,
                  kernels.seg_dist(qx, qy, ax, ay, bx, by), (a, b))


def plan_delete(traj: Trajectory, i, trajectory_id=0):
    return EditOp(EditKind.DELETE, int(traj.locs[i]), trajectory_id, i,
                  deletion_loss(traj, i), (int(traj.locs[i]),))


def insert_many(traj: Trajectory, q, hosts):
    """Insert q after each host segment index (indices refer to ``traj``).

    Returns the new trajectory and, for every new point, the index it came
    from in ``traj`` or -1 for an inserted point.
    """
    hosts = np.sort(np.asarray(hosts, dtype=np.int64))
    n = len(traj)
    locs, times = traj.locs, traj.times
    src = np.arange(n, dtype=np.int64)
    if n == 1:
        c = hosts.size
        new_locs = np.concatenate([locs, np.full(c, q, dtype=np.int64)])
        new_times = np.concatenate([times, np.full(c, times[0])])
        return traj.replace(new_locs, new_times), np.concatenate([src, np.full(c, -1, np.int64)])
    c = hosts.size
    at = hosts + 1 + np.arange(c)  # where the inserted points land
    old = np.ones(n + c, dtype=bool)
    old[at] = False
    new_locs = np.empty(n + c, dtype=np.int64)
    new_locs[old] = locs
    new_locs[at] = q
    new_times = np.empty(n + c, dtype=np.float64)
    new_times[old] = times
    new_times[at] = 0.5 * (times[hosts] + times[hosts + 1])
    new_src = np.full(n + c, -1, dtype=np.int64)
    new_src[old] = src
    return traj.replace(new_locs, new_times), new_src


def delete_positions(traj: Trajectory, positions):
    keep = np.ones(len(traj), dtype=bool)
    keep[np.asarray(positions, dtype=np.int64)] = False
    src = np.flatnonzero(keep)
    return traj.replace(traj.locs[keep], traj.times[keep]), src


def greedy_deletions(traj: Trajectory, q, count):
    """Delete ``count`` occurrences of q one at a time, each the cheapest.

    At every step the occurrence with the smallest current deletion loss is
    removed (ties go to the earlier position). Returns the removed original
    indices in order and their losses.
    """
    q = _key(q)
    occ = int(np.count_nonzero(traj.locs == q))
    if count > occ:
        raise NothingToDeleteError(f"only {occ} occurrences of {q}")
    removed, losses = kernels.greedy_delete(traj.locs, q, int(count), traj.grid)
    return removed.tolist(), losses.tolist()
