"""Trajectory CSV reading and writing.

Format: UTF-8, header ``obj_id,timestamp,lon,lat``, one sample per line.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import DEFAULT_GRID, BBox, Trajectory, center_xy, snap_keys

HEADER = ["obj_id", "timestamp", "lon", "lat"]


class IngestError(IOError):
    """Unreadable input or no usable trajectory."""


@dataclass
class IngestReport:
    n_lines: int = 0
    n_malformed: int = 0
    n_outside_bbox: int = 0
    n_unsorted_objects: int = 0
    bbox: BBox | None = None
    malformed_lines: list = field(default_factory=list)

    def as_dict(self):
        b = self.bbox
        return {
            "lines": self.n_lines,
            "malformed": self.n_malformed,
            "outside_bbox": self.n_outside_bbox,
            "unsorted_objects": self.n_unsorted_objects,
            "bbox": None if b is None else [b.min_x, b.min_y, b.max_x, b.max_y],
        }


def _parse(row):
    if len(row) != 4:
        return None
    oid = row[0].strip()
    if not oid:
        return None
    try:
        t, lon, lat = float(row[1]), float(row[2]), float(row[3])
    except ValueError:
        return None
    if not (math.isfinite(t) and math.isfinite(lon) and math.isfinite(lat)):
        return None
    if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
        return None
    return oid, t, lon, lat


def read_samples(path):
    """Parsed rows grouped by object, in order of first appearance."""
    report = IngestReport()
    groups = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != HEADER:
                raise IngestError(f"{path}: expected header {','.join(HEADER)}")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                report.n_lines += 1
                rec = _parse(row)
                if rec is None:
                    report.n_malformed += 1
                    if len(report.malformed_lines) < 100:
                        report.malformed_lines.append(line_no)
                    continue
                oid, t, lon, lat = rec
                groups.setdefault(oid, []).append((t, lon, lat))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"cannot parse {path}: {exc}") from exc
    return groups, report


def build_dataset(groups, grid=DEFAULT_GRID, bbox: BBox | None = None, report=None):
    """Time-sort, normalise and snap grouped samples into trajectories."""
    report = report or IngestReport()
    arrays = {}
    for oid, rows in groups.items():
        a = np.array(rows, dtype=np.float64).reshape(-1, 3)
        order = np.argsort(a[:, 0], kind="stable")
        if not np.array_equal(order, np.arange(order.size)):
            report.n_unsorted_objects += 1
        arrays[oid] = a[order]
    if bbox is None:
        if not arrays:
            raise IngestError("no valid samples")
        allpts = np.concatenate(list(arrays.values()))
        bbox = BBox.enclosing(allpts[:, 1], allpts[:, 2])
    report.bbox = bbox
    dataset = []
    for oid, a in arrays.items():
        inside = bbox.contains(a[:, 1], a[:, 2])
        report.n_outside_bbox += int((~inside).sum())
        a = a[inside]
        if a.shape[0] == 0:
            continue
        u, v = bbox.to_unit(a[:, 1], a[:, 2])
        dataset.append(Trajectory(oid, snap_keys(u, v, grid), a[:, 0], grid))
    if not dataset:
        raise IngestError("no valid trajectories")
    return dataset, report


def ingest(path, grid=DEFAULT_GRID, bbox: BBox | None = None):
    """Read a trajectory CSV into a dataset. Returns (dataset, report)."""
    groups, report = read_samples(path)
    return build_dataset(groups, grid, bbox, report)


def _fmt_time(t):
    return str(int(t)) if float(t).is_integer() and abs(t) < 2 ** 53 else repr(float(t))


def write_dataset(path, dataset, bbox: BBox):
    """Write cell centres mapped back through ``bbox``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t in dataset:
            u, v = center_xy(t.locs, t.grid)
            lon, lat = bbox.from_unit(u, v)
            oid = t.object_id
            for ts, x, y in zip(t.times.tolist(), lon.tolist(), lat.tolist()):
                w.writerow([oid, _fmt_time(ts), repr(x), repr(y)])


def write_samples(path, rows):
    """Write raw (obj_id, timestamp, lon, lat) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for oid, ts, x, y in rows:
            w.writerow([oid, _fmt_time(ts), repr(float(x)), repr(float(y))])
