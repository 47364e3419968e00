"""Shared physical model: parameters, lattice state, trajectories, source regulation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

MINUTE = 60.0

# Arbitrary production rate shipped with the reference configuration so that
# all engines are comparable with each other (molecules/second).
REFERENCE_S0 = 10.0


@dataclass(frozen=True)
class ModelParams:
    """Physical and kinetic constants of the compartment model.

    All times are seconds. ``s0`` has no default and must be given.
    """

    s0: float
    n_compartments: int = 100
    h: float = 5.0  # micrometres
    D: float = 3.0  # micrometres^2 / s
    t0: float = 144 * MINUTE
    tau_p: float = 86 * MINUTE
    tau_m: float = 9 * MINUTE

    def __post_init__(self):
        if int(self.n_compartments) != self.n_compartments or self.n_compartments < 2:
            raise ValueError(f"n_compartments must be an integer >= 2, got {self.n_compartments}")
        if not self.h > 0:
            raise ValueError(f"h must be > 0, got {self.h}")
        if not self.D >= 0:
            raise ValueError(f"D must be >= 0, got {self.D}")
        if not self.t0 >= 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0}")
        if not self.tau_p > 0:
            raise ValueError(f"tau_p must be > 0, got {self.tau_p}")
        if not self.tau_m > 0:
            raise ValueError(f"tau_m must be > 0, got {self.tau_m}")
        if not self.s0 >= 0:
            raise ValueError(f"s0 must be >= 0, got {self.s0}")

    @property
    def d(self) -> float:
        """Per-molecule hop rate to each neighbour, 1/s."""
        return hop_rate(self)

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


def reference_params(**overrides) -> ModelParams:
    """Default parameters with the reference production rate."""
    return ModelParams(**{"s0": REFERENCE_S0, **overrides})


def hop_rate(params: ModelParams) -> float:
    if params.h == 0:
        raise ValueError("compartment length h must be nonzero")
    return params.D / params.h**2


def source_rate(t: float, params: ModelParams) -> float:
    """Production rate into compartment 1 at time ``t``.

    Constant ``s0`` on ``[0, t0]`` (inclusive), then exponential decay with
    time constant ``tau_m``.
    """
    if t < 0:
        raise ValueError(f"source_rate requires t >= 0, got {t}")
    if t <= params.t0:
        return params.s0
    return params.s0 * math.exp(-(t - params.t0) / params.tau_m)


@dataclass(frozen=True)
class LatticeState:
    counts: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be a vector")
        if (counts < 0).any():
            raise ValueError("molecule counts must be nonnegative")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, n_compartments: int, time: float = 0.0) -> "LatticeState":
        return cls(np.zeros(n_compartments, dtype=np.int64), time)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def sample_grid(final_time: float, sample_interval: float) -> np.ndarray:
    """Sample times ``0, dt, 2 dt, ...`` up to and including ``final_time``."""
    if not final_time > 0:
        raise ValueError(f"final_time must be > 0, got {final_time}")
    if not sample_interval > 0:
        raise ValueError(f"sample_interval must be > 0, got {sample_interval}")
    # tolerate float noise so 12000/60 gives 201 points
    n = int(math.floor(final_time / sample_interval + 1e-9)) + 1
    return np.arange(n, dtype=np.float64) * sample_interval


@dataclass
class Trajectory:
    """Regularly sampled lattice states, one row per sample time."""

    sample_times: np.ndarray
    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, dtype=np.float64)
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.sample_times.shape[0]:
            raise ValueError(
                f"samples shape {self.samples.shape} does not match "
                f"{self.sample_times.shape[0]} sample times"
            )
        if self.sample_times.size > 1 and not (np.diff(self.sample_times) > 0).all():
            raise ValueError("sample_times must be strictly increasing")

    @property
    def n_compartments(self) -> int:
        return self.samples.shape[1]

    @property
    def is_integer(self) -> bool:
        return np.issubdtype(self.samples.dtype, np.integer)

    @property
    def sample_interval(self) -> float:
        if self.sample_times.size < 2:
            return 0.0
        return float(self.sample_times[1] - self.sample_times[0])

    def index_at(self, time: float) -> int:
        """Row index of the sample nearest ``time``, within half an interval."""
        i = int(np.argmin(np.abs(self.sample_times - time)))
        # a single-sample trajectory only matches its own time
        tol = 0.5 * self.sample_interval if self.sample_times.size > 1 else 0.0
        if abs(self.sample_times[i] - time) > tol + 1e-9:
            raise KeyError(
                f"time {time} s is outside the trajectory "
                f"[{self.sample_times[0]}, {self.sample_times[-1]}] s"
            )
        return i

    def at(self, time: float) -> np.ndarray:
        return self.samples[self.index_at(time)]

    def totals(self) -> np.ndarray:
        return self.samples.sum(axis=1)
