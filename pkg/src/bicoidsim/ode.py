"""Deterministic mean-field solution of the compartment system.

All channels are zeroth- or first-order, so these moment equations give the
exact ensemble mean of the stochastic process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import ModelParams, Trajectory, sample_grid, source_rate


@dataclass(frozen=True)
class MeanState:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("values must be a vector")
        if (values < 0).any():
            raise ValueError("expected molecule numbers must be nonnegative")
        object.__setattr__(self, "values", values)


@numba.njit(cache=True)
def _rhs(n, s, d, tau_p, out):
    # zero-flux ends: no hop out of 1 to the left or out of N to the right
    last = n.size - 1
    out[0] = d * (n[1] - n[0]) - n[0] / tau_p + s
    for i in range(1, last):
        out[i] = d * (n[i - 1] - 2.0 * n[i] + n[i + 1]) - n[i] / tau_p
    out[last] = d * (n[last - 1] - n[last]) - n[last] / tau_p


@numba.njit(cache=True)
def _source(t, s0, t0, tau_m):
    if t <= t0:
        return s0
    return s0 * math.exp(-(t - t0) / tau_m)


@numba.njit(cache=True)
def _rk4_segment(y, t_start, h, n_steps, d, tau_p, s0, t0, tau_m):
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    tmp = np.empty_like(y)
    floors = 0
    for step in range(n_steps):
        t = t_start + step * h
        _rhs(y, _source(t, s0, t0, tau_m), d, tau_p, k1)
        for i in range(y.size):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        _rhs(tmp, _source(t + 0.5 * h, s0, t0, tau_m), d, tau_p, k2)
        for i in range(y.size):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        _rhs(tmp, _source(t + 0.5 * h, s0, t0, tau_m), d, tau_p, k3)
        for i in range(y.size):
            tmp[i] = y[i] + h * k3[i]
        _rhs(tmp, _source(t + h, s0, t0, tau_m), d, tau_p, k4)
        for i in range(y.size):
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if y[i] < 0.0:
                y[i] = 0.0
                floors += 1
    return floors


def mean_field_rhs(state: MeanState, t: float, params: ModelParams) -> np.ndarray:
    """Time derivative of the expected count in each compartment."""
    out = np.empty_like(state.values)
    _rhs(state.values, source_rate(t, params), params.d, params.tau_p, out)
    return out


def stability_bound(params: ModelParams) -> float:
    return 1.0 / (2.0 * (2.0 * params.d + 1.0 / params.tau_p))


def _check_dt(dt: float, params: ModelParams) -> None:
    bound = stability_bound(params)
    if not (dt > 0 and dt < bound):
        raise ValueError(f"dt={dt} s must satisfy 0 < dt < {bound:.6g} s (explicit stability bound)")


def integrate(values: np.ndarray, t_start: float, t_end: float, params: ModelParams,
              dt: float = 0.1) -> tuple[np.ndarray, int]:
    """Advance ``values`` from ``t_start`` to ``t_end``; steps never straddle ``t0``.

    Returns the new values and the number of cells clamped at zero.
    """
    _check_dt(dt, params)
    y = np.array(values, dtype=np.float64)
    cuts = [t_start, t_end]
    if t_start < params.t0 < t_end:
        cuts.insert(1, params.t0)
    floors = 0
    for a, b in zip(cuts[:-1], cuts[1:]):
        n_steps = max(1, math.ceil((b - a) / dt - 1e-9))
        floors += _rk4_segment(y, a, (b - a) / n_steps, n_steps, params.d, params.tau_p,
                               params.s0, params.t0, params.tau_m)
    return y, floors


def solve_mean_field(
    params: ModelParams,
    final_time: float,
    dt: float = 0.1,
    sample_interval: float = 60.0,
    initial: np.ndarray | None = None,
) -> Trajectory:
    """Fixed-step RK4 from the empty lattice (or ``initial``), sampled on the shared grid."""
    _check_dt(dt, params)
    times = sample_grid(final_time, sample_interval)
    n = params.n_compartments
    y = np.zeros(n) if initial is None else np.array(initial, dtype=np.float64)
    if y.shape != (n,) or (y < 0).any():
        raise ValueError("initial state must be n_compartments nonnegative values")
    samples = np.empty((times.size, n))
    samples[0] = y
    floors = 0
    for k in range(1, times.size):
        y, f = integrate(y, times[k - 1], times[k], params, dt)
        floors += f
        samples[k] = y
    meta = {
        "engine": "ode",
        "params": params.to_dict(),
        "dt": float(dt),
        "final_time": float(final_time),
        "sample_interval": float(sample_interval),
        "floor_clamps": int(floors),
    }
    if initial is not None:
        meta["initial"] = [float(v) for v in np.asarray(initial)]
    return Trajectory(times, samples, meta)


def mass_derivative(total: float, t: float, params: ModelParams) -> float:
    """d/dt of the total expected molecule number (diffusion cancels)."""
    return source_rate(t, params) - total / params.tau_p


def mass_peak_time(params: ModelParams, final_time: float | None = None, dt: float = 0.1,
                   xtol: float = 1e-6) -> float:
    """Time of the maximum of the total expected mass, by bisection on its derivative."""
    horizon = final_time if final_time is not None else params.t0 + 10 * params.tau_p
    traj = solve_mean_field(params, horizon, dt=dt, sample_interval=1.0)
    g = np.array([mass_derivative(m, t, params) for t, m in zip(traj.sample_times, traj.totals())])
    idx = np.flatnonzero((g[:-1] > 0) & (g[1:] <= 0))
    if idx.size == 0:
        raise ValueError("total mass has no interior maximum within the horizon")
    k = int(idx[0])
    lo, hi = float(traj.sample_times[k]), float(traj.sample_times[k + 1])
    base = traj.samples[k]

    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        y_mid, _ = integrate(base, lo, mid, params, dt)
        if mass_derivative(float(y_mid.sum()), mid, params) > 0:
            lo, base = mid, y_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
