"""Deterministic CSV outputs with JSON metadata sidecars.

Numbers are written in shortest round-trip form (``repr``), integers as
integers; nothing time- or host-dependent goes into any file, so identical
inputs give byte-identical outputs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .model import MINUTE, Trajectory


def _cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_metadata(meta: dict, path) -> Path:
    out = meta_path(path)
    doc = dict(_jsonable(meta), artifact_version=__version__)
    try:
        out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc
    return out


def write_trajectory(traj: Trajectory, path, extra_meta: dict | None = None) -> Path:
    """Matrix CSV ``time_s, c1..cN`` plus a ``.meta.json`` sidecar."""
    path = Path(path)
    header = "time_s," + ",".join(f"c{i}" for i in range(1, traj.n_compartments + 1))
    integer = traj.is_integer
    lines = [header]
    for t, row in zip(traj.sample_times, traj.samples):
        cells = map(str, row.tolist()) if integer else map(repr, row.astype(float).tolist())
        lines.append(repr(float(t)) + "," + ",".join(cells))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory {path}: {exc}") from exc
    meta = dict(traj.meta)
    meta.setdefault("run_count", meta.get("n_runs", 1))
    meta["value_type"] = "integer" if integer else "real"
    meta["shape"] = list(traj.samples.shape)
    if extra_meta:
        meta.update(extra_meta)
    write_metadata(meta, path)
    return path


def read_trajectory(path) -> Trajectory:
    """Load a CSV written by :func:`write_trajectory` (sidecar optional)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read trajectory {path}: {exc}") from exc
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    if not rows or rows[0][0] != "time_s":
        raise ValueError(f"{path}: missing 'time_s,c1..cN' header")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no samples")
    times = np.array([float(r[0]) for r in body])
    cells = [r[1:] for r in body]
    if any(len(r) != len(rows[0]) - 1 for r in cells):
        raise ValueError(f"{path}: ragged rows")
    integer = all("." not in c and "e" not in c.lower() for r in cells for c in r)
    samples = np.array(cells, dtype=np.int64 if integer else np.float64)
    meta = {}
    side = meta_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    meta["source_file"] = path.name
    return Trajectory(times, samples, meta)


def decimate(traj: Trajectory, sample_interval: float) -> Trajectory:
    """Keep rows on the coarser grid ``0, dt, 2dt, ...`` (dt a multiple of the native step)."""
    native = traj.sample_interval
    if native == 0 or sample_interval == native:
        return traj
    ratio = sample_interval / native
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError(f"sample interval {sample_interval} s is not a multiple of {native} s")
    step = int(round(ratio))
    meta = dict(traj.meta, sample_interval=float(sample_interval))
    return Trajectory(traj.sample_times[::step], traj.samples[::step], meta)


def write_snapshots(traj: Trajectory, minutes, path, std: Trajectory | None = None) -> Path:
    """Long-format CSV: one block of ``N`` rows per requested minute.

    Columns are ``minute, sample_time_s, compartment, count`` (plus ``std`` for
    ensembles). Each minute maps to the nearest sample within half an interval;
    the mapping is recorded in the sidecar.
    """
    path = Path(path)
    lines = ["minute,sample_time_s,compartment,count" + (",std" if std is not None else "")]
    lookup = {}
    for m in minutes:
        t = float(m) * MINUTE
        try:
            i = traj.index_at(t)
        except KeyError:
            raise ValueError(f"snapshot minute {m:g} is outside the trajectory horizon "
                             f"[0, {traj.sample_times[-1] / MINUTE:g}] min") from None
        ts = float(traj.sample_times[i])
        lookup[f"{float(m)!r}"] = ts
        row = traj.samples[i]
        for c in range(traj.n_compartments):
            cells = [repr(float(m)), repr(ts), str(c + 1), _cell(row[c])]
            if std is not None:
                cells.append(repr(float(std.samples[i, c])))
            lines.append(",".join(cells))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshots {path}: {exc}") from exc
    write_metadata(dict(traj.meta, snapshot_minutes=[float(m) for m in minutes],
                        snapshot_sample_times=lookup), path)
    return path
