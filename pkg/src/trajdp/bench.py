"""Timing of the modification workload under each search strategy.

Every strategy runs the same seeded GL pipeline on the same synthetic
corpus. Only the modification phases are timed; noise draws, ranking and
point-list selection are identical across strategies and excluded. The
outputs are compared before any time is reported, since every strategy
must return exactly the same nearest segments.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .index import STRATEGIES
from .pipeline import RunConfig, run_pipeline
from .synth import generate_dataset


class StrategyMismatchError(AssertionError):
    """Two strategies produced different anonymised datasets."""


@dataclass
class BenchRow:
    size: int
    strategy: str
    seconds: float  # best of the repeats
    inter_seconds: float
    intra_seconds: float
    searches: int
    runs: list = field(default_factory=list)

    def as_dict(self):
        return {"size": self.size, "strategy": self.strategy, "seconds": self.seconds,
                "inter_seconds": self.inter_seconds, "intra_seconds": self.intra_seconds,
                "searches": self.searches, "runs": list(self.runs)}


def _modify_seconds(result):
    return result.timings.get("inter_modify", 0.0), result.timings.get("intra_modify", 0.0)


def bench(sizes=(1000,), strategies=STRATEGIES, seed=0, avg_len=1800, epsilon=1.0, m=10,
          repeats=1, backend=None, progress=None):
    """Return one BenchRow per (size, strategy), in the order given.

    ``repeats`` is a count for every strategy or a mapping from strategy to
    count. Repeats are interleaved across strategies so that slow periods
    of the machine are shared out, and each strategy reports its best run.
    """
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    counts = {s: max(1, int(repeats.get(s, 1) if isinstance(repeats, dict) else repeats))
              for s in strategies}
    rows = []
    for size in sizes:
        dataset, _ = generate_dataset(int(size), avg_len, seed=seed)
        reference = None
        best = {}
        runs = {s: [] for s in strategies}
        for rep in range(max(counts.values())):
            for strategy in strategies:
                if rep >= counts[strategy]:
                    continue
                cfg = RunConfig(mode="GL", epsilon=epsilon, m=m, seed=seed, strategy=strategy,
                                backend=backend)
                result = run_pipeline(dataset, cfg)
                inter, intra = _modify_seconds(result)
                runs[strategy].append(inter + intra)
                if strategy not in best or inter + intra < sum(best[strategy][1]):
                    best[strategy] = (result, (inter, intra))
                if reference is None:
                    reference = (strategy, result.dataset)
                elif result.dataset != reference[1]:
                    raise StrategyMismatchError(
                        f"{strategy} and {reference[0]} disagree at size {size}")
        for strategy in strategies:
            result, (inter, intra) = best[strategy]
            searches = result.global_trace.searches + result.local_trace.searches
            row = BenchRow(int(size), strategy, inter + intra, inter, intra, searches,
                           runs[strategy])
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def format_table(rows):
    lines = [f"{'size':>6} {'strategy':<8} {'seconds':>9} {'inter':>9} {'intra':>9} "
             f"{'searches':>9}"]
    for r in rows:
        lines.append(f"{r.size:>6} {r.strategy:<8} {r.seconds:>9.3f} {r.inter_seconds:>9.3f} "
                     f"{r.intra_seconds:>9.3f} {r.searches:>9}")
    return "\n".join(lines)
