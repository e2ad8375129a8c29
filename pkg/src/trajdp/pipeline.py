"""End-to-end anonymisation runs.

Random streams are derived from the run seed so that each phase and each
trajectory has its own generator:

    (0,)    global trajectory-frequency noise
    (1, i)  local point-frequency noise of trajectory i
    (2, i)  random fill of trajectory i's point list
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .edits import UtilityLoss
from .geo import DEFAULT_GRID
from .index import STRATEGIES, SegmentIndex, levels_for
from .io import IngestError, build_dataset, ingest, read_samples, write_dataset
from .mechanisms import (MODES, ConfigurationError, PrivacyBudget, budget_report, perturb_pf,
                         perturb_tf)
from .metrics import metric_report
from .modifier import inter_modify, intra_modify
from .signature import CandidateSet, compute_tf, rank_dataset, select_point_list

GL_ORDERS = ("global_first", "local_first")


@dataclass
class RunConfig:
    mode: str = "GL"
    epsilon: float | None = None
    eps_global: float | None = None
    eps_local: float | None = None
    m: int = 10
    grid: int = DEFAULT_GRID
    seed: int = 0
    gl_order: str = "global_first"
    strategy: str = "HG_+"
    backend: str | None = None

    def budget(self) -> PrivacyBudget:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigurationError("m must be an integer >= 1")
        try:
            levels_for(int(self.grid))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.grid > 4096:
            raise ConfigurationError("grid must be at most 4096")
        if self.gl_order not in GL_ORDERS:
            raise ConfigurationError(f"gl_order must be one of {GL_ORDERS}")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be an integer in [0, 2**64)")
        return budget_report(self.mode, self.epsilon, self.eps_global, self.eps_local)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GlobalTrace:
    candidates: np.ndarray
    original: np.ndarray
    perturbed: np.ndarray
    searches: int = 0
    modify_seconds: float = 0.0


@dataclass
class LocalTrace:
    point_lists: list
    perturbed: list  # PerturbedPF per trajectory
    searches: int = 0
    modify_seconds: float = 0.0


@dataclass
class RunResult:
    dataset: list
    budget: PrivacyBudget
    config: RunConfig
    global_loss: UtilityLoss = field(default_factory=UtilityLoss)
    local_loss: UtilityLoss = field(default_factory=UtilityLoss)
    global_trace: GlobalTrace | None = None
    local_trace: LocalTrace | None = None
    clamps: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def total_loss(self):
        return self.global_loss.total + self.local_loss.total

    def report(self, timings=False):
        cfg = asdict(self.config)
        cfg.pop("backend")
        out = {
            "config": cfg,
            "budget": self.budget.as_dict(),
            "trajectories": len(self.dataset),
            "points": int(sum(len(t) for t in self.dataset)),
            "inter": {**self.global_loss.as_dict(),
                      "searches": self.global_trace.searches if self.global_trace else 0,
                      "candidates": int(self.global_trace.candidates.size)
                      if self.global_trace else 0},
            "intra": {**self.local_loss.as_dict(),
                      "searches": self.local_trace.searches if self.local_trace else 0},
            "utility_loss": self.total_loss,
            "clamps": [c.as_dict() for c in self.clamps],
        }
        if timings:
            out["timings"] = dict(self.timings)
        return out


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def global_phase(dataset, cfg: RunConfig, eps, hook=None):
    ranked = rank_dataset(dataset)
    cand = sorted({k for r in ranked for k in r.keys[: cfg.m].tolist()})
    keys = np.array(cand, dtype=np.int64)
    tf = compute_tf(dataset)
    ptf = perturb_tf(keys, tf.lookup(keys) if keys.size else keys, eps, len(dataset),
                     _stream(cfg.seed, 0))
    t0 = time.perf_counter()
    res = inter_modify(dataset, ptf, cfg.strategy, cfg.backend, hook)
    modify_time = time.perf_counter() - t0
    return res, GlobalTrace(ptf.keys, ptf.original, ptf.perturbed, res.searches, modify_time)


def local_phase(dataset, cfg: RunConfig, eps, hook=None):
    ranked = rank_dataset(dataset)
    cand = CandidateSet(frozenset(k for r in ranked for k in r.keys[: cfg.m].tolist()))
    out, lists, pfs, clamps = [], [], [], []
    loss = UtilityLoss()
    searches = 0
    modify_time = 0.0
    index = SegmentIndex(cfg.strategy, dataset[0].grid, cfg.backend) if dataset else None
    for i, (t, r) in enumerate(zip(dataset, ranked)):
        pl = select_point_list(r, cand, cfg.m, _stream(cfg.seed, 2, i))
        pf = dict(zip(r.keys.tolist(), r.pf.tolist()))
        f = np.array([pf[k] for k in pl.tolist()], dtype=np.int64)
        ppf = perturb_pf(pl, f, cfg.m, eps, _stream(cfg.seed, 1, i), trajectory_id=i)
        t0 = time.perf_counter()
        res = intra_modify(t, ppf, cfg.strategy, cfg.backend, hook, trajectory_id=i,
                           index=index)
        modify_time += time.perf_counter() - t0
        out.append(res.dataset[0])
        loss.merge(res.loss)
        clamps.extend(res.clamps)
        searches += res.searches
        lists.append(pl)
        pfs.append(ppf)
    return out, loss, clamps, LocalTrace(lists, pfs, searches, modify_time)


def run_pipeline(dataset, cfg: RunConfig, hook=None) -> RunResult:
    budget = cfg.budget()
    result = RunResult(list(dataset), budget, cfg)
    steps = []
    if cfg.mode == "pureG":
        steps = ["global"]
    elif cfg.mode == "pureL":
        steps = ["local"]
    else:
        steps = ["global", "local"] if cfg.gl_order == "global_first" else ["local", "global"]
    cur = result.dataset
    for step in steps:
        t0 = time.perf_counter()
        if step == "global":
            res, trace = global_phase(cur, cfg, budget.eps_global, hook)
            cur = res.dataset
            result.global_loss = res.loss
            result.global_trace = trace
            result.clamps.extend(res.clamps)
            result.timings["inter_modify"] = trace.modify_seconds
        else:
            cur, loss, clamps, trace = local_phase(cur, cfg, budget.eps_local, hook)
            result.local_loss = loss
            result.local_trace = trace
            result.clamps.extend(clamps)
            result.timings["intra_modify"] = trace.modify_seconds
        result.timings[step] = time.perf_counter() - t0
    result.dataset = cur
    return result


def _dump(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def anonymize(cfg: RunConfig, input_path, output_path, report_path=None, timings=False):
    """Ingest, anonymise and write; returns the report dict."""
    cfg.budget()  # fail before any work
    t0 = time.perf_counter()
    dataset, ingest_report = ingest(input_path, cfg.grid)
    t_ingest = time.perf_counter() - t0
    result = run_pipeline(dataset, cfg)
    t1 = time.perf_counter()
    write_dataset(output_path, result.dataset, ingest_report.bbox)
    result.timings["ingest"] = t_ingest
    result.timings["write"] = time.perf_counter() - t1
    report = result.report(timings=timings)
    report["input"] = ingest_report.as_dict()
    _dump(report, report_path)
    return report


def evaluate(original_path, anonymized_path, report_path=None, m=10, bins=20, te_grid=8,
             ffp_k=50, grid=DEFAULT_GRID):
    """Metrics of an anonymised file against its original, paired by object id."""
    original, orep = ingest(original_path, grid)
    groups, arep = read_samples(anonymized_path)
    try:
        anonymized, arep = build_dataset(groups, grid, orep.bbox, arep)
    except IngestError:
        anonymized = []
    by_id = {t.object_id: t for t in anonymized}
    orig_ids = [t.object_id for t in original]
    paired_o = [t for t in original if t.object_id in by_id]
    paired_a = [by_id[t.object_id] for t in paired_o]
    missing = sorted(set(orig_ids) - set(by_id))
    extra = sorted(set(by_id) - set(orig_ids))
    if not paired_o:
        raise IngestError("no object id occurs in both files")
    report = metric_report(paired_o, paired_a, m, bins, te_grid, ffp_k)
    report.update({
        "paired": len(paired_o),
        "excluded": len(missing) + len(extra),
        "missing_in_anonymized": missing,
        "missing_in_original": extra,
        "params": {"m": m, "bins": bins, "te_grid": te_grid, "ffp_k": ffp_k, "grid": grid},
    })
    _dump(report, report_path)
    return report
