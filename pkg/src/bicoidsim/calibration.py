"""Grid-sweep calibration of the agent model against a target trajectory."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .abm import AbmConfig, run_abm_ensemble
from .ensemble import map_ordered
from .model import MINUTE, Trajectory
from .rng import key_from_values

SWEEP_PARAMS = (
    "source_decay_rate",
    "protein_decay_rate",
    "prob_right",
    "prob_left",
    "source_production_prob",
)
DEFAULT_COMPARE_MINUTES = (60.0, 100.0, 144.0, 180.0, 200.0)


@dataclass(frozen=True)
class ParamRange:
    low: float
    high: float
    step: float = 1.0

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError(f"range low {self.low} exceeds high {self.high}")
        if not self.step > 0:
            raise ValueError(f"range step must be > 0, got {self.step}")

    @classmethod
    def single(cls, value: float) -> "ParamRange":
        return cls(value, value, 1.0)

    def values(self) -> list[float]:
        count = math.floor((self.high - self.low) / self.step + 1e-9) + 1
        # rounding strips accumulation noise such as 0.30000000000000004
        return [round(self.low + k * self.step, 12) for k in range(count)]


@dataclass(frozen=True)
class SweepSpec:
    ranges: dict
    base: AbmConfig = field(default_factory=AbmConfig)
    runs_per_case: int = 20
    compare_minutes: tuple = DEFAULT_COMPARE_MINUTES
    compartments: tuple | None = None  # 1-based subset; None means all

    def __post_init__(self):
        unknown = set(self.ranges) - set(SWEEP_PARAMS)
        if unknown:
            raise ValueError(f"cannot sweep {sorted(unknown)}; sweepable: {SWEEP_PARAMS}")
        full = {}
        for name in SWEEP_PARAMS:
            r = self.ranges.get(name)
            if r is None:
                r = ParamRange.single(getattr(self.base, name))
            elif not isinstance(r, ParamRange):
                r = ParamRange(*r)
            full[name] = r
        object.__setattr__(self, "ranges", full)
        if self.runs_per_case < 1:
            raise ValueError("runs_per_case must be >= 1")
        if not self.compare_minutes:
            raise ValueError("at least one comparison time is required")

    @property
    def grid_sizes(self) -> tuple[int, ...]:
        return tuple(len(self.ranges[p].values()) for p in SWEEP_PARAMS)

    @property
    def n_cases(self) -> int:
        return math.prod(self.grid_sizes)

    @property
    def compare_times(self) -> list[float]:
        return [m * MINUTE for m in self.compare_minutes]

    @classmethod
    def table3(cls, base: AbmConfig | None = None, **kwargs) -> "SweepSpec":
        """Five standard ranges with steps that make each one a grid (5625 cases)."""
        ranges = {
            "source_decay_rate": ParamRange(0.01, 0.05, 0.01),
            "protein_decay_rate": ParamRange(0.01, 0.05, 0.01),
            "prob_right": ParamRange(0.1, 0.5, 0.1),
            "prob_left": ParamRange(0.1, 0.5, 0.1),
            "source_production_prob": ParamRange(0.2, 1.0, 0.1),
        }
        return cls(ranges, base or AbmConfig(), **kwargs)


@dataclass(frozen=True)
class CaseResult:
    case_id: int
    params: tuple
    score: float
    partials: tuple

    def as_dict(self) -> dict:
        return dict(zip(SWEEP_PARAMS, self.params))


def enumerate_cases(spec: SweepSpec) -> list[tuple]:
    """Row-major Cartesian product over the sweep parameters; case ``k`` is item ``k-1``."""
    cases = list(itertools.product(*(spec.ranges[p].values() for p in SWEEP_PARAMS)))
    if not cases:
        raise ValueError("sweep grid is empty")
    return cases


def _cells(traj: Trajectory, times, compartments) -> np.ndarray:
    rows = []
    for t in times:
        try:
            rows.append(traj.index_at(t))
        except KeyError:
            raise ValueError(f"comparison time {t} s ({t / MINUTE:g} min) is outside the trajectory") from None
    block = np.asarray(traj.samples[rows], dtype=np.float64)
    if compartments is not None:
        idx = np.asarray(compartments, dtype=np.int64) - 1
        if idx.min() < 0 or idx.max() >= traj.n_compartments:
            raise ValueError(f"compartment subset outside 1..{traj.n_compartments}")
        block = block[:, idx]
    return block


def snapshot_distances(candidate: Trajectory, target: Trajectory, times,
                       compartments=None) -> np.ndarray:
    """Mean squared difference per requested time."""
    a = _cells(candidate, times, compartments)
    b = _cells(target, times, compartments)
    if a.shape != b.shape:
        raise ValueError(f"trajectories disagree in compartment count: {a.shape[1]} vs {b.shape[1]}")
    return np.mean((a - b) ** 2, axis=1)


def square_distance(candidate: Trajectory, target: Trajectory, times,
                    compartments=None) -> float:
    """Mean over (time, compartment) cells of the squared difference, molecules^2."""
    return float(np.mean(snapshot_distances(candidate, target, times, compartments)))


def case_seed_key(params: tuple) -> int:
    return key_from_values(params)


def _score_case(item, *, spec, target, base_seed):
    case_id, params = item
    config = spec.base.replace(**dict(zip(SWEEP_PARAMS, params)))
    stats = run_abm_ensemble(config, spec.runs_per_case, base_seed,
                             seed_keys=(case_seed_key(params),), workers=1)
    partials = snapshot_distances(stats.mean_trajectory(), target, spec.compare_times,
                                  spec.compartments)
    return CaseResult(case_id, tuple(params), float(np.mean(partials)),
                      tuple(float(p) for p in partials))


def run_sweep(spec: SweepSpec, target: Trajectory, base_seed: int,
              workers: int | None = None) -> list[CaseResult]:
    """Score every case and return results ranked by score, ties by case id."""
    horizon = spec.base.n_iterations
    for t in spec.compare_times:
        if t > horizon:
            raise ValueError(f"comparison time {t / MINUTE:g} min exceeds the {horizon} s agent horizon")
    items = list(enumerate(enumerate_cases(spec), start=1))
    score = partial(_score_case, spec=spec, target=target, base_seed=base_seed)
    results = list(map_ordered(score, items, workers))
    return sorted(results, key=lambda r: (r.score, r.case_id))


def write_sweep_table(results: list[CaseResult], spec: SweepSpec, path) -> Path:
    """CSV with one row per case in case-id order, including its rank."""
    path = Path(path)
    rank = {r.case_id: k for k, r in enumerate(sorted(results, key=lambda r: (r.score, r.case_id)), 1)}
    header = ["case_id", *SWEEP_PARAMS, "score", "rank",
              *(f"score_{m:g}min" for m in spec.compare_minutes)]
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in sorted(results, key=lambda r: r.case_id):
                w.writerow([r.case_id, *map(repr, r.params), repr(r.score), rank[r.case_id],
                            *map(repr, r.partials)])
    except OSError as exc:
        raise OSError(f"cannot write sweep table {path}: {exc}") from exc
    return path
