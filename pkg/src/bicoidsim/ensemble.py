"""Ensemble aggregation shared by the stochastic and agent-based engines."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .model import Trajectory


@dataclass
class EnsembleStats:
    sample_times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int
    base_seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.shape[0] != len(self.sample_times):
            raise ValueError("mean/std shapes do not match the sample grid")

    @property
    def sem(self) -> np.ndarray:
        """Standard error of the mean per cell."""
        return self.std / np.sqrt(self.n_runs)

    def mean_trajectory(self) -> Trajectory:
        return Trajectory(self.sample_times, self.mean, dict(self.meta, statistic="mean"))

    def std_trajectory(self) -> Trajectory:
        return Trajectory(self.sample_times, self.std, dict(self.meta, statistic="std"))


class RunningMoments:
    """Welford accumulator; order of ``add`` calls fixes the result bit for bit."""

    def __init__(self):
        self.n = 0
        self._mean = None
        self._m2 = None

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.n += 1
        if self._mean is None:
            self._mean = x.copy()
            self._m2 = np.zeros_like(x)
            return
        delta = x - self._mean
        self._mean += delta / self.n
        self._m2 += delta * (x - self._mean)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def std(self) -> np.ndarray:
        # population std: a single run has std 0
        return np.sqrt(np.maximum(self._m2 / self.n, 0.0))


def default_workers() -> int:
    env = os.environ.get("BICOIDSIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_ordered(fn: Callable, items: Iterable, workers: int | None = None) -> Iterator:
    """``map`` that may run concurrently but always yields in input order."""
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items)


def aggregate(trajectories: Iterable[Trajectory], base_seed: int, meta: dict) -> EnsembleStats:
    moments = RunningMoments()
    times = None
    events = []
    for traj in trajectories:
        if times is None:
            times = traj.sample_times
        moments.add(traj.samples)
        if "event_count" in traj.meta:
            events.append(traj.meta["event_count"])
    if moments.n == 0:
        raise ValueError("ensemble needs at least one run")
    meta = dict(meta, n_runs=moments.n, base_seed=int(base_seed))
    if events:
        meta["event_count_total"] = int(sum(events))
    return EnsembleStats(times, moments.mean, moments.std, moments.n, int(base_seed), meta)
