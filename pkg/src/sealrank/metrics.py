"""Benchmark-level aggregation and agreement metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from .errors import AggregationError, UndefinedMetricError
from .tournament import TaskRanking


@dataclass(frozen=True)
class LeaderboardEntry:
    candidate: str
    rank: int
    score: float
    mean_margin: float = 0.0


@dataclass(frozen=True)
class Leaderboard:
    benchmark: str
    entries: tuple[LeaderboardEntry, ...]
    protocol: str = ""

    @property
    def order(self) -> list[str]:
        return [e.candidate for e in self.entries]

    @property
    def ranks(self) -> dict[str, int]:
        return {e.candidate: e.rank for e in self.entries}

    @property
    def scores(self) -> dict[str, float]:
        return {e.candidate: e.score for e in self.entries}

    @property
    def top(self) -> str:
        return self.entries[0].candidate


RankInput = Union[Leaderboard, Mapping[str, float], Sequence[float]]


def _k(x: float) -> float:
    return round(x, 12)


def _build(benchmark: str, rows: Iterable[tuple[str, float, float]], protocol: str) -> Leaderboard:
    ordered = sorted(rows, key=lambda r: (-_k(r[1]), -_k(r[2]), r[0]))
    return Leaderboard(
        benchmark,
        tuple(LeaderboardEntry(c, i, s, m) for i, (c, s, m) in enumerate(ordered, start=1)),
        protocol,
    )


def borda_aggregate(
    task_rankings: Iterable[TaskRanking], pool: Iterable[str], benchmark: str = "", protocol: str = ""
) -> Leaderboard:
    """Mean normalized Borda score; ties by mean accumulated margin, then id."""
    pool = sorted(pool)
    n = len(pool)
    if n < 2:
        raise AggregationError("need at least two candidates")
    totals = dict.fromkeys(pool, 0.0)
    margins = dict.fromkeys(pool, 0.0)
    count = 0
    for tr in task_rankings:
        if sorted(tr.order) != pool:
            raise AggregationError(f"ranking for task {tr.task_id!r} is not a permutation of the pool")
        for r, c in enumerate(tr.order, start=1):
            totals[c] += (n - r) / (n - 1)
            margins[c] += tr.margins.get(c, 0.0)
        count += 1
    if count == 0:
        raise AggregationError("no task rankings to aggregate")
    return _build(benchmark, ((c, totals[c] / count, margins[c] / count) for c in pool), protocol)


def score_leaderboard(
    scores: Mapping[str, float], benchmark: str = "", protocol: str = "", margins: Mapping[str, float] | None = None
) -> Leaderboard:
    """Leaderboard straight from per-candidate scores; ties by margin, then id."""
    margins = margins or {}
    return _build(benchmark, ((c, float(s), margins.get(c, 0.0)) for c, s in scores.items()), protocol)


def mean_scores(per_task: Mapping[str, Mapping[str, float | None]], pool: Iterable[str]) -> dict[str, float]:
    """Average per-candidate score over the tasks where it was scored."""
    out = {}
    for c in pool:
        vals = [s[c] for s in per_task.values() if s.get(c) is not None]
        out[c] = sum(vals) / len(vals) if vals else 0.0
    return out


def _aligned(a: RankInput, b: RankInput) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, Leaderboard):
        a = a.ranks
    if isinstance(b, Leaderboard):
        b = b.ranks
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        if set(a) != set(b):
            raise UndefinedMetricError("rankings cover different candidate sets")
        keys = sorted(a)
        return np.array([a[k] for k in keys], float), np.array([b[k] for k in keys], float)
    x, y = np.asarray(a, float), np.asarray(b, float)
    if x.shape != y.shape:
        raise UndefinedMetricError("rank vectors differ in length")
    return x, y


def spearman_rho(a: RankInput, b: RankInput) -> float:
    """Spearman's rho: Pearson correlation of average-rank vectors."""
    x, y = _aligned(a, b)
    if len(x) < 2:
        raise UndefinedMetricError("correlation needs at least two candidates")
    rx, ry = rankdata(x), rankdata(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if denom == 0:
        raise UndefinedMetricError("a ranking is constant")
    return float(np.dot(dx, dy)) / denom


def top1_agreement(a: Leaderboard, b: Leaderboard) -> bool:
    if set(a.order) != set(b.order):
        raise UndefinedMetricError("leaderboards cover different candidate sets")
    return a.top == b.top


def mean_pairwise_separation(scores: Mapping[str, float]) -> float:
    vals = list(scores.values())
    pairs = list(itertools.combinations(vals, 2))
    if not pairs:
        return 0.0
    return sum(abs(x - y) for x, y in pairs) / len(pairs)


def resolution_gain(protocol_scores: Mapping[str, float], native_scores: Mapping[str, float]) -> float:
    """Mean absolute pairwise score gap under a protocol over the same under the native metric.

    Both score maps are expected on their [0, 1] scales (Borda, mean judge
    score, native pass rate); no further rescaling is applied.
    """
    if set(protocol_scores) != set(native_scores):
        raise UndefinedMetricError("score maps cover different candidates")
    native = mean_pairwise_separation(native_scores)
    if native == 0:
        raise UndefinedMetricError("native scores do not separate any candidates")
    return mean_pairwise_separation(protocol_scores) / native


@dataclass(frozen=True)
class StabilityReport:
    benchmark: str
    n_tasks: int
    subsample_size: int
    rhos: tuple[float, ...]
    top1: tuple[bool, ...]

    @property
    def mean_rho(self) -> float:
        return float(np.mean(self.rhos))

    @property
    def min_rho(self) -> float:
        return float(np.min(self.rhos))

    @property
    def recovery_rate(self) -> float:
        return sum(self.top1) / len(self.top1)


def subsample_size(n_tasks: int, fraction: float | int) -> int:
    if isinstance(fraction, int) and not isinstance(fraction, bool) and fraction > 1:
        size = fraction
    else:
        if not 0 < fraction <= 1:
            raise ValueError(f"invalid subsample fraction {fraction}")
        size = round(fraction * n_tasks)
    if size < 1 or size > n_tasks:
        raise ValueError(f"subsample fraction {fraction} gives {size} of {n_tasks} tasks")
    return size


def subsample_stability(
    task_rankings: Sequence[TaskRanking],
    pool: Iterable[str],
    fraction: float | int,
    seeds: Iterable[int],
    benchmark: str = "",
) -> StabilityReport:
    """Compare leaderboards from random task subsets against the full-task leaderboard."""
    task_rankings = list(task_rankings)
    pool = sorted(pool)
    if len(task_rankings) < 2:
        raise ValueError("stability analysis needs at least two tasks")
    size = subsample_size(len(task_rankings), fraction)
    full = borda_aggregate(task_rankings, pool, benchmark)
    rhos, tops = [], []
    for seed in seeds:
        idx = np.random.default_rng(seed).choice(len(task_rankings), size=size, replace=False)
        sub = borda_aggregate([task_rankings[i] for i in sorted(idx)], pool, benchmark)
        rhos.append(spearman_rho(sub, full))
        tops.append(top1_agreement(sub, full))
    if not rhos:
        raise ValueError("no seeds given")
    return StabilityReport(benchmark, len(task_rankings), size, tuple(rhos), tuple(tops))


@dataclass(frozen=True)
class RerunReport:
    n_runs: int
    rhos: tuple[float, ...]
    top1_matches: int
    pairs: int = field(default=0)

    @property
    def mean_rho(self) -> float:
        return float(np.mean(self.rhos))

    @property
    def min_rho(self) -> float:
        return float(np.min(self.rhos))


def rerun_stability(leaderboards: Sequence[Leaderboard]) -> RerunReport:
    """Pairwise agreement across repeated full runs."""
    if len(leaderboards) < 2:
        raise ValueError("need at least two runs")
    rhos, tops = [], 0
    for a, b in itertools.combinations(leaderboards, 2):
        rhos.append(spearman_rho(a, b))
        tops += top1_agreement(a, b)
    return RerunReport(len(leaderboards), tuple(rhos), tops, len(rhos))
