"""Exact stochastic simulation of the compartment system (Gillespie direct method).

Reactions are indexed in a fixed order of ``3N - 1`` channels::

    0 .. N-2      diffuse-right from compartment 1..N-1
    N-1 .. 2N-3   diffuse-left from compartment 2..N
    2N-2 .. 3N-3  degrade in compartment 1..N
    3N-2          produce into compartment 1

The time-dependent source rate is evaluated at the current time and held
over each waiting time (quasi-static; its fastest timescale ``tau_m`` is many
orders of magnitude above the mean inter-event time at realistic populations).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import partial

import numba
import numpy as np

from .ensemble import EnsembleStats, aggregate, map_ordered
from .model import LatticeState, ModelParams, Trajectory, sample_grid, source_rate
from .rng import UniformStream, make_generator, open_unit

SOURCE_MODES = ("zeroth-order", "literal")

# uniforms requested per kernel call (two per event)
_CHUNK = 1 << 18


class ReactionKind(enum.Enum):
    DIFFUSE_RIGHT = "diffuse-right"
    DIFFUSE_LEFT = "diffuse-left"
    DEGRADE = "degrade"
    PRODUCE = "produce"


@dataclass(frozen=True)
class ReactionIndex:
    kind: ReactionKind
    compartment: int  # 1-based

    @classmethod
    def from_flat(cls, j: int, n: int) -> "ReactionIndex":
        if j < 0 or j >= 3 * n - 1:
            raise IndexError(f"reaction {j} outside 0..{3 * n - 2}")
        if j < n - 1:
            return cls(ReactionKind.DIFFUSE_RIGHT, j + 1)
        if j < 2 * n - 2:
            return cls(ReactionKind.DIFFUSE_LEFT, j - (n - 1) + 2)
        if j < 3 * n - 2:
            return cls(ReactionKind.DEGRADE, j - (2 * n - 2) + 1)
        return cls(ReactionKind.PRODUCE, 1)

    def flat(self, n: int) -> int:
        c = self.compartment
        if self.kind is ReactionKind.DIFFUSE_RIGHT and 1 <= c <= n - 1:
            return c - 1
        if self.kind is ReactionKind.DIFFUSE_LEFT and 2 <= c <= n:
            return (n - 1) + c - 2
        if self.kind is ReactionKind.DEGRADE and 1 <= c <= n:
            return (2 * n - 2) + c - 1
        if self.kind is ReactionKind.PRODUCE and c == 1:
            return 3 * n - 2
        raise ValueError(f"{self.kind.value} is not defined for compartment {c}")

    def apply(self, counts: np.ndarray) -> None:
        """Apply the state change in place (0-based array, 1-based index)."""
        i = self.compartment - 1
        if self.kind is ReactionKind.DIFFUSE_RIGHT:
            counts[i] -= 1
            counts[i + 1] += 1
        elif self.kind is ReactionKind.DIFFUSE_LEFT:
            counts[i] -= 1
            counts[i - 1] += 1
        elif self.kind is ReactionKind.DEGRADE:
            counts[i] -= 1
        else:
            counts[0] += 1
        assert counts[i] >= 0, f"negative count after {self}"


def all_reactions(n: int) -> list[ReactionIndex]:
    return [ReactionIndex.from_flat(j, n) for j in range(3 * n - 1)]


@dataclass(frozen=True)
class PropensityVector:
    rates: np.ndarray
    subtotals: tuple[float, float, float, float]
    total: float

    def select(self, r2: float) -> int:
        """Flat index ``j`` with ``sum(a[:j]) <= r2*a < sum(a[:j+1])``."""
        cum = np.cumsum(self.rates)
        j = int(np.searchsorted(cum, r2 * self.total, side="right"))
        # rounding can push r2*a onto the last boundary
        if j >= self.rates.size:
            j = int(np.flatnonzero(self.rates)[-1])
        return j


def compute_propensities(
    state: LatticeState, t: float, params: ModelParams, source_mode: str = "zeroth-order"
) -> PropensityVector:
    if source_mode not in SOURCE_MODES:
        raise ValueError(f"unknown source_mode {source_mode!r}; expected one of {SOURCE_MODES}")
    m = np.asarray(state.counts, dtype=np.float64)
    n = m.size
    d = params.d
    s = source_rate(t, params)
    a4 = s * m[0] if source_mode == "literal" else s
    rates = np.concatenate([d * m[: n - 1], d * m[1:], m / params.tau_p, [a4]])
    subtotals = (
        float(np.sum(rates[: n - 1])),
        float(np.sum(rates[n - 1 : 2 * n - 2])),
        float(np.sum(rates[2 * n - 2 : 3 * n - 2])),
        float(a4),
    )
    return PropensityVector(rates, subtotals, float(np.sum(rates)))


def direct_method_step(
    state: LatticeState,
    t: float,
    params: ModelParams,
    rng: UniformStream,
    source_mode: str = "zeroth-order",
) -> tuple[LatticeState, float]:
    """One event of the direct method; draws exactly ``r1`` then ``r2``."""
    prop = compute_propensities(state, t, params, source_mode)
    if not prop.total > 0:
        raise ValueError("total propensity is zero: the system is frozen")
    r1 = rng.random()
    r2 = rng.random()
    tau = math.log(1.0 / r1) / prop.total
    j = prop.select(r2)
    counts = np.array(state.counts)
    ReactionIndex.from_flat(j, counts.size).apply(counts)
    t_new = t + tau
    return LatticeState(counts, t_new), t_new


# ---------------------------------------------------------------------------
# jitted event loop

@numba.njit(cache=True, nogil=True)
def _scan(counts, start, k):
    # first compartment i >= start with sum(counts[start:i+1]) > k
    i = start
    c = counts[i]
    while c <= k:
        i += 1
        c += counts[i]
    return i


@numba.njit(cache=True, nogil=True)
def _pick(counts, mass, d, tau_p, a1, a2, a3, a4, target):
    """Flat reaction index for ``target = r2 * a``: channel from the subtotals,
    then compartment by integer rank within the channel."""
    n = counts.size
    c1 = a1
    c2 = c1 + a2
    c3 = c2 + a3
    if target < c1:
        k = min(int(target / d), mass - counts[n - 1] - 1)
        return _scan(counts, 0, k)
    if target < c2:
        k = min(int((target - c1) / d), mass - counts[0] - 1)
        return (n - 1) + _scan(counts, 1, k) - 1
    if target < c3 or a4 == 0.0:
        k = min(int((target - c2) * tau_p), mass - 1)
        return (2 * n - 2) + _scan(counts, 0, k)
    return 3 * n - 2


@numba.njit(cache=True, nogil=True)
def _apply(counts, j):
    """Apply reaction ``j`` in place; returns the change in total count."""
    n = counts.size
    if j < n - 1:
        counts[j] -= 1
        counts[j + 1] += 1
        return 0
    if j < 2 * n - 2:
        i = j - (n - 1) + 1
        counts[i] -= 1
        counts[i - 1] += 1
        return 0
    if j < 3 * n - 2:
        counts[j - (2 * n - 2)] -= 1
        return -1
    counts[0] += 1
    return 1


@numba.njit(cache=True, nogil=True)
def _ssa_kernel(counts, mass, t, d, tau_p, s0, t0, tau_m, literal,
                final_time, times, samples, next_sample, buf, pos, events):
    n = counts.size
    n_samples = times.size
    status = 0
    while True:
        if pos + 2 > buf.size:
            break
        m0 = counts[0]
        mn = counts[n - 1]
        a1 = d * (mass - mn)
        a2 = d * (mass - m0)
        a3 = mass / tau_p
        if t <= t0:
            s = s0
        else:
            s = s0 * math.exp(-(t - t0) / tau_m)
        a4 = s * m0 if literal else s
        a = a1 + a2 + a3 + a4
        if not a > 0.0:
            status = 2
            break
        r1 = open_unit(buf[pos])
        r2 = open_unit(buf[pos + 1])
        pos += 2
        t_new = t + math.log(1.0 / r1) / a
        while next_sample < n_samples and times[next_sample] < t_new:
            samples[next_sample, :] = counts
            next_sample += 1
        if t_new > final_time:
            status = 1
            break
        j = _pick(counts, mass, d, tau_p, a1, a2, a3, a4, r2 * a)
        mass += _apply(counts, j)
        events += 1
        t = t_new
    if status == 2:
        while next_sample < n_samples:
            samples[next_sample, :] = counts
            next_sample += 1
    return t, mass, next_sample, pos, events, status


def simulate(
    params: ModelParams,
    final_time: float,
    sample_interval: float,
    stream: UniformStream,
    source_mode: str = "zeroth-order",
    initial: np.ndarray | None = None,
) -> Trajectory:
    """Run the event loop on an existing uniform stream."""
    if source_mode not in SOURCE_MODES:
        raise ValueError(f"unknown source_mode {source_mode!r}; expected one of {SOURCE_MODES}")
    n = params.n_compartments
    times = sample_grid(final_time, sample_interval)
    if initial is None:
        counts = np.zeros(n, dtype=np.int64)
    else:
        counts = np.array(initial, dtype=np.int64)
        if counts.shape != (n,) or (counts < 0).any():
            raise ValueError("initial state must be n_compartments nonnegative counts")
    samples = np.zeros((times.size, n), dtype=np.int64)
    mass = int(counts.sum())
    t, next_sample, events, status = 0.0, 0, 0, 0
    while status == 0:
        buf, pos = stream.window(_CHUNK)
        t, mass, next_sample, pos, events, status = _ssa_kernel(
            counts, mass, t, params.d, params.tau_p, params.s0, params.t0,
            params.tau_m, source_mode == "literal", float(final_time), times, samples,
            next_sample, buf, pos, events,
        )
        stream.advance(pos)
    meta = {
        "engine": "ssa",
        "params": params.to_dict(),
        "source_mode": source_mode,
        "final_time": float(final_time),
        "sample_interval": float(sample_interval),
        "event_count": int(events),
        "frozen": status == 2,
    }
    if status == 2:
        meta["frozen_at"] = float(t)
    if initial is not None:
        meta["initial"] = [int(c) for c in np.asarray(initial)]
    return Trajectory(times, samples, meta)


def run_ssa(
    params: ModelParams,
    final_time: float,
    sample_interval: float,
    seed: int,
    source_mode: str = "zeroth-order",
    initial: np.ndarray | None = None,
) -> Trajectory:
    """Single seeded realisation from the empty lattice (or ``initial``, a test hook)."""
    traj = simulate(params, final_time, sample_interval, UniformStream(make_generator(seed), _CHUNK),
                    source_mode, initial)
    traj.meta["seed"] = int(seed)
    return traj


def _ensemble_member(run_index, *, params, final_time, sample_interval, base_seed, source_mode, initial):
    stream = UniformStream(make_generator(base_seed, run_index), _CHUNK)
    return simulate(params, final_time, sample_interval, stream, source_mode, initial)


def run_ensemble(
    params: ModelParams,
    final_time: float,
    sample_interval: float,
    n_runs: int,
    base_seed: int,
    source_mode: str = "zeroth-order",
    initial: np.ndarray | None = None,
    workers: int | None = None,
) -> EnsembleStats:
    """Per-cell mean and std over ``n_runs`` runs seeded from ``(base_seed, run_index)``."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    member = partial(_ensemble_member, params=params, final_time=final_time,
                     sample_interval=sample_interval, base_seed=base_seed,
                     source_mode=source_mode, initial=initial)
    meta = {
        "engine": "ssa-ensemble",
        "params": params.to_dict(),
        "source_mode": source_mode,
        "final_time": float(final_time),
        "sample_interval": float(sample_interval),
    }
    return aggregate(map_ordered(member, range(n_runs), workers), base_seed, meta)
