"""Command-line entry point: ``bicoidsim {ssa,ode,abm,sweep,compare}``.

Errors go to stderr as a single ``error: <key>: <message>`` line; exit code 2
for configuration problems, 1 for anything else.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .abm import run_abm, run_abm_ensemble
from .calibration import run_sweep, square_distance, write_sweep_table
from .config import ConfigError, RunConfig, parse_config, read_pairs, render_config
from .io import decimate, read_trajectory, write_metadata, write_snapshots, write_trajectory
from .model import MINUTE
from .ode import solve_mean_field
from .ssa import run_ensemble, run_ssa

OUTPUT_ENV = "BICOIDSIM_OUTPUT_DIR"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bicoidsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ssa", "exact stochastic simulation (direct method)"),
        ("ode", "deterministic mean-field reference"),
        ("abm", "agent-based simulation"),
        ("sweep", "grid-sweep calibration of the agent model"),
    ]:
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=Path, help="KEY = value configuration file")
        s.add_argument("--seed", type=int)
        s.add_argument("--runs", type=int, help="ensemble size (N_RUNS)")
        s.add_argument("--out", type=Path, help=f"output directory (default ${OUTPUT_ENV} or ./output)")
        s.add_argument("--final-time", type=float, help="seconds (iterations for abm)")
        s.add_argument("--sample-interval", type=float, help="seconds between output rows")
        s.add_argument("--s0", type=float, help="source production rate, molecules/s")
        s.add_argument("--workers", type=int, help="threads for ensemble members / sweep cases")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")
    c = sub.add_parser("compare", help="square distance between two trajectory CSV files")
    c.add_argument("candidate", type=Path)
    c.add_argument("target", type=Path)
    c.add_argument("--minutes", help="comma-separated comparison minutes (default: shared sample times)")
    c.add_argument("--compartments", help="comma-separated 1-based compartment subset")
    return p


def load_config(args) -> RunConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from None
    pairs = read_pairs(text)
    if "ENGINE" in pairs and pairs["ENGINE"].lower() != args.command:
        raise ConfigError("ENGINE", f"config selects {pairs['ENGINE']!r} but the subcommand is {args.command!r}")
    overrides = {"ENGINE": args.command}
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip().upper()] = v.strip()
    flags = {"SEED": args.seed, "N_RUNS": args.runs, "SAMPLE_INTERVAL": args.sample_interval,
             "S0": args.s0, "OUTPUT_DIR": args.out}
    if args.final_time is not None:
        key = "N_ITERATIONS" if args.command in ("abm", "sweep") else "FINAL_TIME"
        flags[key] = args.final_time
    overrides.update({k: v for k, v in flags.items() if v is not None})
    merged = {**pairs, **overrides}
    if args.command in ("abm", "sweep") and "FINAL_TIME" in merged and "N_ITERATIONS" in merged:
        raise ConfigError("FINAL_TIME", "give either FINAL_TIME or N_ITERATIONS for the agent engine")
    # ssa, ode and abm key sets are disjoint from the sweep-only keys; let the
    # parser report anything misplaced
    cfg = parse_config("\n".join(f"{k} = {v}" for k, v in merged.items()))
    if cfg.stochastic and cfg.seed is None:
        raise ConfigError("SEED", f"required for the stochastic engine {cfg.engine} (use --seed)")
    return cfg


def output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir or os.environ.get(OUTPUT_ENV) or "output")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(cfg: RunConfig, out: Path, stem: str, traj, std=None) -> list[Path]:
    extra = {"config": render_config(cfg)}
    written = []
    if std is None:
        written.append(write_trajectory(traj, out / f"{stem}.csv", extra))
    else:
        written.append(write_trajectory(traj, out / f"{stem}_mean.csv", extra))
        written.append(write_trajectory(std, out / f"{stem}_std.csv", extra))
    if cfg.snapshot_minutes:
        written.append(write_snapshots(traj, cfg.snapshot_minutes, out / f"{stem}_snapshots.csv", std))
    return written


def run_engine(cfg: RunConfig, workers: int | None = None) -> list[Path]:
    out = output_dir(cfg)
    if cfg.engine == "ssa":
        if cfg.n_runs == 1:
            traj = run_ssa(cfg.model, cfg.final_time, cfg.sample_interval, cfg.seed, cfg.source_mode)
            return _emit(cfg, out, "ssa", traj)
        stats = run_ensemble(cfg.model, cfg.final_time, cfg.sample_interval, cfg.n_runs, cfg.seed,
                             cfg.source_mode, workers=workers)
        return _emit(cfg, out, "ssa", stats.mean_trajectory(), stats.std_trajectory())
    if cfg.engine == "ode":
        traj = solve_mean_field(cfg.model, cfg.final_time, cfg.dt, cfg.sample_interval)
        return _emit(cfg, out, "ode", traj)
    if cfg.engine == "abm":
        if cfg.n_runs == 1:
            traj = decimate(run_abm(cfg.abm, cfg.seed), cfg.sample_interval)
            return _emit(cfg, out, "abm", traj)
        stats = run_abm_ensemble(cfg.abm, cfg.n_runs, cfg.seed, workers=workers)
        return _emit(cfg, out, "abm", decimate(stats.mean_trajectory(), cfg.sample_interval),
                     decimate(stats.std_trajectory(), cfg.sample_interval))
    # sweep
    written = []
    if cfg.target in ("ssa", "ode"):
        horizon = float(cfg.abm.n_iterations)
        if cfg.target == "ssa":
            target = run_ensemble(cfg.model, horizon, 60.0, cfg.target_runs, cfg.seed,
                                  cfg.source_mode, workers=workers).mean_trajectory()
        else:
            target = solve_mean_field(cfg.model, horizon, cfg.dt, 60.0)
        written.append(write_trajectory(target, out / "target.csv", {"config": render_config(cfg)}))
    else:
        target = read_trajectory(cfg.target)
    results = run_sweep(cfg.sweep, target, cfg.seed, workers)
    table = write_sweep_table(results, cfg.sweep, out / "sweep.csv")
    best = results[0]
    write_metadata({
        "engine": "sweep",
        "config": render_config(cfg),
        "base_seed": cfg.seed,
        "n_cases": len(results),
        "runs_per_case": cfg.sweep.runs_per_case,
        "target": target.meta.get("source_file", cfg.target),
        "best_case": {"case_id": best.case_id, **best.as_dict(), "score": best.score},
    }, table)
    written.append(table)
    return written


def _compare(args) -> float:
    cand = read_trajectory(args.candidate)
    targ = read_trajectory(args.target)
    comps = None
    if args.compartments:
        comps = [int(x) for x in args.compartments.split(",") if x.strip()]
    if args.minutes:
        times = [float(x) * MINUTE for x in args.minutes.split(",") if x.strip()]
    else:
        common = set(cand.sample_times.tolist()) & set(targ.sample_times.tolist())
        if not common:
            raise ValueError("the trajectories share no sample times; pass --minutes")
        times = sorted(common)
    return square_distance(cand, targ, times, comps)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            print(repr(_compare(args)))
            return 0
        cfg = load_config(args)
        for path in run_engine(cfg, args.workers):
            print(path)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
