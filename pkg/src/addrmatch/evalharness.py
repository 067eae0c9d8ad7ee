"""Metrics and experiment harness: artery/door accuracy with threshold
filtering, recall@k, cutoff sweeps, confidence histograms, throughput
benchmarks and multi-seed stability summaries."""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import NormalizedAddress, UnnormalizedAddress, artery_key, door_key
from .pipeline import MatchDecision, Matcher, Mode

__all__ = [
    "EvalReport",
    "ConfidenceHistogram",
    "ThroughputReport",
    "StabilitySummary",
    "MissingGold",
    "evaluate",
    "sweep_cutoffs",
    "histogram",
    "bench_throughput",
    "multi_seed_stability",
]


class MissingGold(KeyError):
    pass


@dataclass(frozen=True)
class EvalReport:
    n: int
    cutoff_used: float
    artery_acc_nofilter: float
    door_acc_nofilter: float
    artery_acc_filtered: Optional[float]   # None when everything is discarded
    door_acc_filtered: Optional[float]
    discarded_pct: float
    recall_at: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cutoff_used": self.cutoff_used,
            "artery_acc_nofilter": self.artery_acc_nofilter,
            "door_acc_nofilter": self.door_acc_nofilter,
            "artery_acc_filtered": self.artery_acc_filtered,
            "door_acc_filtered": self.door_acc_filtered,
            "discarded_pct": self.discarded_pct,
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
        }


def evaluate(decisions: Sequence[MatchDecision],
             gold: dict[str, str],
             addresses: dict[str, NormalizedAddress],
             cutoff: float,
             recall_ks: Sequence[int] = (1, 5, 10)) -> EvalReport:
    """Score a batch of decisions against gold ids.

    Door correct iff the predicted address's door key equals the gold's;
    artery analogously. recall@k checks whether any of the first k candidates
    matches the gold at door level. Filtered metrics cover only decisions
    with confidence >= cutoff.
    """
    if not decisions:
        raise ValueError("no decisions to evaluate")
    door_ok = []
    artery_ok = []
    confident = []
    recall_hits = {k: 0 for k in recall_ks}
    for d in decisions:
        if d.query.raw not in gold:
            raise MissingGold(d.query.raw)
        gold_addr = addresses[gold[d.query.raw]]
        gdk, gak = door_key(gold_addr), artery_key(gold_addr)
        pred = addresses[d.best.id]
        door_ok.append(door_key(pred) == gdk)
        artery_ok.append(artery_key(pred) == gak)
        confident.append(d.confidence >= cutoff)
        for k in recall_ks:
            if any(door_key(addresses[c.id]) == gdk
                   for c in d.candidates[:k]):
                recall_hits[k] += 1
    n = len(decisions)
    door_ok = np.array(door_ok)
    artery_ok = np.array(artery_ok)
    confident = np.array(confident)
    kept = int(confident.sum())
    return EvalReport(
        n=n,
        cutoff_used=cutoff,
        artery_acc_nofilter=float(100.0 * artery_ok.mean()),
        door_acc_nofilter=float(100.0 * door_ok.mean()),
        artery_acc_filtered=(float(100.0 * artery_ok[confident].mean())
                             if kept else None),
        door_acc_filtered=(float(100.0 * door_ok[confident].mean())
                           if kept else None),
        discarded_pct=100.0 * (n - kept) / n,
        recall_at={k: 100.0 * v / n for k, v in recall_hits.items()},
    )


def sweep_cutoffs(decisions, gold, addresses,
                  grid: Sequence[float]) -> list[EvalReport]:
    if list(grid) != sorted(grid):
        raise ValueError("cutoff grid must be sorted ascending")
    return [evaluate(decisions, gold, addresses, c) for c in grid]


@dataclass(frozen=True)
class ConfidenceHistogram:
    counts: tuple[int, ...]   # 100 bins over [0,1], width 0.01
    n: int

    @property
    def bin_edges(self) -> list[float]:
        return [i / 100.0 for i in range(101)]

    def to_csv(self) -> str:
        lines = ["bin_start,bin_end,count"]
        for i, c in enumerate(self.counts):
            lines.append(f"{i / 100:.2f},{(i + 1) / 100:.2f},{c}")
        return "\n".join(lines) + "\n"


def histogram(decisions: Sequence[MatchDecision]) -> ConfidenceHistogram:
    """100 uniform bins over [0,1]; the top bin is right-inclusive so a
    confidence of exactly 1.0 lands in [0.99,1.00]."""
    counts = [0] * 100
    for d in decisions:
        i = min(int(d.confidence * 100), 99)
        counts[i] += 1
    return ConfidenceHistogram(tuple(counts), len(decisions))


@dataclass(frozen=True)
class ThroughputReport:
    mode: str
    with_cp4_filter: bool
    iterations_per_second: float   # median over repetitions
    n_queries: int
    wall_time: float               # of the median repetition
    per_repetition: tuple[float, ...] = ()

    @property
    def stdev(self) -> float:
        if len(self.per_repetition) < 2:
            return 0.0
        return statistics.stdev(self.per_repetition)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "with_cp4_filter": self.with_cp4_filter,
            "iterations_per_second": self.iterations_per_second,
            "n_queries": self.n_queries,
            "wall_time": self.wall_time,
            "per_repetition": list(self.per_repetition),
            "stdev": self.stdev,
        }


def bench_throughput(matcher: Matcher, queries: Sequence[UnnormalizedAddress],
                     with_cp4_filter: bool, repetitions: int = 3,
                     mode: Optional[Mode] = None) -> ThroughputReport:
    """Median iterations/second over >= 3 repetitions, processing queries one
    at a time (no batching)."""
    if not queries:
        raise ValueError("need at least one query")
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    rates = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for q in queries:
            matcher.match(q, mode=mode, force_all_shards=not with_cp4_filter)
        elapsed = time.perf_counter() - t0
        rates.append(len(queries) / elapsed)
    med = statistics.median(rates)
    return ThroughputReport(
        mode=(mode or matcher.cfg.mode).value,
        with_cp4_filter=with_cp4_filter,
        iterations_per_second=med,
        n_queries=len(queries),
        wall_time=len(queries) / med,
        per_repetition=tuple(rates),
    )


@dataclass(frozen=True)
class StabilitySummary:
    seeds: tuple[int, ...]
    artery_accs: tuple[float, ...]
    door_accs: tuple[float, ...]
    median_artery: float
    median_door: float
    std_artery: float
    std_door: float
    selected_run: int   # index into seeds; the median-door-accuracy run

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "artery_accs": list(self.artery_accs),
            "door_accs": list(self.door_accs),
            "median_artery": self.median_artery,
            "median_door": self.median_door,
            "std_artery": self.std_artery,
            "std_door": self.std_door,
            "selected_run": self.selected_run,
        }


def multi_seed_stability(procedure: Callable[[int], tuple[float, float]],
                         seeds: Sequence[int]) -> StabilitySummary:
    """Run a full train+evaluate procedure per seed. ``procedure`` maps a seed
    to (artery accuracy, door accuracy) in percent. The selected run is the
    one whose door accuracy is closest to the median (earliest on ties)."""
    if len(seeds) < 2:
        raise ValueError("need at least 2 seeds")
    artery, door = [], []
    for s in seeds:
        a, d = procedure(s)
        artery.append(a)
        door.append(d)
    med_door = statistics.median(door)
    med_artery = statistics.median(artery)
    selected = min(range(len(seeds)), key=lambda i: (abs(door[i] - med_door), i))
    std_door = statistics.pstdev(door) if len(set(door)) > 0 else 0.0
    std_artery = statistics.pstdev(artery)
    return StabilitySummary(
        seeds=tuple(seeds), artery_accs=tuple(artery), door_accs=tuple(door),
        median_artery=med_artery, median_door=med_door,
        std_artery=std_artery, std_door=std_door, selected_run=selected)
