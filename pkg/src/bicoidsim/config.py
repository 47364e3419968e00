"""Flat ``KEY = value`` run configuration.

Grammar: one ``KEY = value`` pair per line; ``#`` starts a comment; blank
lines are ignored; keys are case-insensitive and may appear once. Lists are
comma separated, sweep ranges are ``low:high:step``. Times are seconds
except the ``*_MINUTES`` keys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .abm import PRESETS, AbmConfig
from .calibration import DEFAULT_COMPARE_MINUTES, SWEEP_PARAMS, ParamRange, SweepSpec
from .model import MINUTE, ModelParams
from .ssa import SOURCE_MODES

ENGINES = ("ssa", "ode", "abm", "sweep")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


MODEL_KEYS = {
    "N_COMPARTMENTS": "n_compartments",
    "H": "h",
    "D": "D",
    "T0": "t0",
    "TAU_P": "tau_p",
    "TAU_M": "tau_m",
    "S0": "s0",
}
ABM_KEYS = {
    "SOURCE_DECAY_RATE": "source_decay_rate",
    "SOURCE_TIME_DECAY": "source_time_decay",
    "SOURCE_TIME_PRODUCE": "source_time_produce",
    "SOURCE_PRODUCTION_PROB": "source_production_prob",
    "PROTEIN_DECAY_RATE": "protein_decay_rate",
    "COMPARTMENT_DIM_X": "compartment_dim_x",
    "COMPARTMENT_DIM_Y": "compartment_dim_y",
    "PROB_RIGHT": "prob_right",
    "PROB_LEFT": "prob_left",
    "DIE": "die_threshold",
    "N_ITERATIONS": "n_iterations",
    "PRODUCE_MODE": "produce_mode",
    "DEATH_MODE": "death_mode",
    "DEATH_PROB": "death_prob",
}
SWEEP_KEYS = {f"SWEEP_{p.upper()}": p for p in SWEEP_PARAMS}
RUN_KEYS = (
    "ENGINE", "FINAL_TIME", "SAMPLE_INTERVAL", "DT", "SEED", "N_RUNS", "SNAPSHOT_MINUTES",
    "OUTPUT_DIR", "SOURCE_MODE", "PRESET", "SWEEP_PRESET", "RUNS_PER_CASE",
    "COMPARE_MINUTES", "COMPARE_COMPARTMENTS", "TARGET", "TARGET_RUNS",
)
KNOWN_KEYS = frozenset(RUN_KEYS) | set(MODEL_KEYS) | set(ABM_KEYS) | set(SWEEP_KEYS)

_INT_FIELDS = {"n_compartments", "source_time_decay", "source_time_produce", "n_iterations"}
_STR_FIELDS = {"produce_mode", "death_mode"}
DEFAULT_SNAPSHOT_MINUTES = DEFAULT_COMPARE_MINUTES
DEFAULT_FINAL_TIME = 200 * MINUTE


@dataclass(frozen=True)
class RunConfig:
    engine: str
    model: ModelParams | None = None
    abm: AbmConfig | None = None
    sweep: SweepSpec | None = None
    final_time: float = DEFAULT_FINAL_TIME
    sample_interval: float = 60.0
    dt: float = 0.1
    seed: int | None = None
    n_runs: int = 1
    snapshot_minutes: tuple = DEFAULT_SNAPSHOT_MINUTES
    output_dir: str | None = None
    source_mode: str = "zeroth-order"
    target: str | None = None
    target_runs: int = 20
    preset: str | None = None

    @property
    def horizon(self) -> float:
        """Simulated seconds covered by the selected engine's output."""
        if self.engine in ("abm", "sweep"):
            return float(self.abm.n_iterations)
        return float(self.final_time)

    @property
    def stochastic(self) -> bool:
        return self.engine in ("ssa", "abm", "sweep")


def _number(key: str, text: str, kind=float):
    try:
        if kind is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected {'an integer' if kind is int else 'a number'}, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {text!r}")
    return value


def _float_list(key: str, text: str) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError(key, "expected a comma-separated list")
    return tuple(_number(key, s) for s in items)


def _int_list(key: str, text: str) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError(key, "expected a comma-separated list")
    return tuple(_number(key, s, int) for s in items)


def _range(key: str, text: str) -> ParamRange:
    parts = [p.strip() for p in text.split(":")]
    if len(parts) == 1:
        return ParamRange.single(_number(key, parts[0]))
    if len(parts) != 3:
        raise ConfigError(key, f"expected low:high:step, got {text!r}")
    try:
        return ParamRange(*(_number(key, p) for p in parts))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, str(exc)) from None


def read_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected KEY = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.upper()
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        if key in pairs:
            raise ConfigError(key, "given more than once")
        pairs[key] = value
    return pairs


def _build(cls, key_map: dict, pairs: dict, base: dict, label: str):
    values = dict(base)
    for key, name in key_map.items():
        if key in pairs:
            text = pairs[key]
            if name in _STR_FIELDS:
                values[name] = text
            else:
                values[name] = _number(key, text, int if name in _INT_FIELDS else float)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        bad = next((k for k, n in key_map.items() if str(exc).startswith(n + " ")), label)
        raise ConfigError(bad, str(exc)) from None


def config_from_pairs(pairs: dict) -> RunConfig:
    if "ENGINE" not in pairs:
        raise ConfigError("ENGINE", f"required; one of {ENGINES}")
    engine = pairs["ENGINE"].lower()
    if engine not in ENGINES:
        raise ConfigError("ENGINE", f"must be one of {ENGINES}, got {pairs['ENGINE']!r}")

    target = pairs.get("TARGET")
    needs_model = engine in ("ssa", "ode") or (engine == "sweep" and target in ("ssa", "ode"))
    model = None
    if needs_model or "S0" in pairs:
        if "S0" not in pairs:
            raise ConfigError("S0", f"required for engine {engine} (no default production rate)")
        model = _build(ModelParams, MODEL_KEYS, pairs, {}, "model")

    abm = None
    if engine in ("abm", "sweep"):
        preset = pairs.get("PRESET", "standard")
        if preset not in PRESETS:
            raise ConfigError("PRESET", f"must be one of {sorted(PRESETS)}, got {preset!r}")
        base = PRESETS[preset].to_dict()
        if "FINAL_TIME" in pairs and "N_ITERATIONS" not in pairs:
            base["n_iterations"] = _number("FINAL_TIME", pairs["FINAL_TIME"], int)
        abm = _build(AbmConfig, {**ABM_KEYS, "N_COMPARTMENTS": "n_compartments"}, pairs, base, "abm")
    elif "PRESET" in pairs:
        raise ConfigError("PRESET", f"only meaningful for abm/sweep engines, not {engine}")

    sweep = None
    if engine == "sweep":
        if target is None:
            raise ConfigError("TARGET", "required for engine sweep (trajectory CSV path, 'ssa' or 'ode')")
        if pairs.get("SWEEP_PRESET") not in (None, "table3"):
            raise ConfigError("SWEEP_PRESET", f"unknown preset {pairs['SWEEP_PRESET']!r}")
        ranges = {}
        if pairs.get("SWEEP_PRESET") == "table3":
            ranges = dict(SweepSpec.table3(abm).ranges)
        for key, name in SWEEP_KEYS.items():
            if key in pairs:
                ranges[name] = _range(key, pairs[key])
        if not ranges:
            raise ConfigError("SWEEP_PRESET", "sweep needs SWEEP_PRESET or at least one SWEEP_<PARAM> range")
        minutes = (_float_list("COMPARE_MINUTES", pairs["COMPARE_MINUTES"])
                   if "COMPARE_MINUTES" in pairs else DEFAULT_COMPARE_MINUTES)
        comps = (_int_list("COMPARE_COMPARTMENTS", pairs["COMPARE_COMPARTMENTS"])
                 if "COMPARE_COMPARTMENTS" in pairs else None)
        runs = _number("RUNS_PER_CASE", pairs.get("RUNS_PER_CASE", "20"), int)
        if runs < 1:
            raise ConfigError("RUNS_PER_CASE", "must be >= 1")
        sweep = SweepSpec(ranges, abm, runs, minutes, comps)
        for m in minutes:
            if m * MINUTE > abm.n_iterations:
                raise ConfigError("COMPARE_MINUTES", f"{m:g} min exceeds the {abm.n_iterations} s horizon")
        if comps is not None and (min(comps) < 1 or max(comps) > abm.n_compartments):
            raise ConfigError("COMPARE_COMPARTMENTS", f"indices must lie in 1..{abm.n_compartments}")
    else:
        for key in ("SWEEP_PRESET", "RUNS_PER_CASE", "COMPARE_MINUTES", "COMPARE_COMPARTMENTS",
                    "TARGET", "TARGET_RUNS", *SWEEP_KEYS):
            if key in pairs:
                raise ConfigError(key, f"only meaningful for engine sweep, not {engine}")

    run = {}
    if engine in ("ssa", "ode"):
        run["final_time"] = _number("FINAL_TIME", pairs.get("FINAL_TIME", repr(DEFAULT_FINAL_TIME)))
        if not run["final_time"] > 0:
            raise ConfigError("FINAL_TIME", "must be > 0")
    default_interval = "1.0" if engine in ("abm", "sweep") else "60.0"
    run["sample_interval"] = _number("SAMPLE_INTERVAL", pairs.get("SAMPLE_INTERVAL", default_interval))
    if not run["sample_interval"] > 0:
        raise ConfigError("SAMPLE_INTERVAL", "must be > 0")
    if engine in ("abm", "sweep") and not float(run["sample_interval"]).is_integer():
        raise ConfigError("SAMPLE_INTERVAL", "agent output is decimated by whole iterations")
    run["dt"] = _number("DT", pairs.get("DT", "0.1"))
    if not run["dt"] > 0:
        raise ConfigError("DT", "must be > 0")
    if "SEED" in pairs:
        run["seed"] = _number("SEED", pairs["SEED"], int)
        if run["seed"] < 0:
            raise ConfigError("SEED", "must be >= 0")
    run["n_runs"] = _number("N_RUNS", pairs.get("N_RUNS", "1"), int)
    if run["n_runs"] < 1:
        raise ConfigError("N_RUNS", "must be >= 1")
    run["target_runs"] = _number("TARGET_RUNS", pairs.get("TARGET_RUNS", "20"), int)
    if run["target_runs"] < 1:
        raise ConfigError("TARGET_RUNS", "must be >= 1")
    mode = pairs.get("SOURCE_MODE", "zeroth-order")
    if mode not in SOURCE_MODES:
        raise ConfigError("SOURCE_MODE", f"must be one of {SOURCE_MODES}, got {mode!r}")

    cfg = RunConfig(engine=engine, model=model, abm=abm, sweep=sweep, source_mode=mode,
                    output_dir=pairs.get("OUTPUT_DIR"), target=target,
                    preset=pairs.get("PRESET") if engine in ("abm", "sweep") else None, **run)
    if "SNAPSHOT_MINUTES" in pairs:
        minutes = _float_list("SNAPSHOT_MINUTES", pairs["SNAPSHOT_MINUTES"])
        for m in minutes:
            if m < 0 or m * MINUTE > cfg.horizon + 1e-9:
                raise ConfigError("SNAPSHOT_MINUTES", f"{m:g} min is outside the {cfg.horizon:g} s horizon")
    else:
        minutes = tuple(m for m in DEFAULT_SNAPSHOT_MINUTES if m * MINUTE <= cfg.horizon + 1e-9)
    return _replace(cfg, snapshot_minutes=minutes)


def _replace(cfg: RunConfig, **changes) -> RunConfig:
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values.update(changes)
    return RunConfig(**values)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a configuration document; ``overrides`` win over the text."""
    pairs = read_pairs(text)
    for key, value in (overrides or {}).items():
        key = key.upper()
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        pairs[key] = str(value)
    return config_from_pairs(pairs)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` for every valid configuration."""
    lines = [f"ENGINE = {cfg.engine}"]
    if cfg.model is not None:
        for key, name in MODEL_KEYS.items():
            lines.append(f"{key} = {_fmt(getattr(cfg.model, name))}")
    if cfg.abm is not None:
        if cfg.preset is not None:
            lines.append(f"PRESET = {cfg.preset}")
        for key, name in ABM_KEYS.items():
            lines.append(f"{key} = {_fmt(getattr(cfg.abm, name))}")
        if cfg.model is None:
            lines.append(f"N_COMPARTMENTS = {cfg.abm.n_compartments}")
    if cfg.sweep is not None:
        for key, name in SWEEP_KEYS.items():
            r = cfg.sweep.ranges[name]
            lines.append(f"{key} = {_fmt(float(r.low))}:{_fmt(float(r.high))}:{_fmt(float(r.step))}")
        lines.append(f"RUNS_PER_CASE = {cfg.sweep.runs_per_case}")
        lines.append("COMPARE_MINUTES = " + ", ".join(_fmt(float(m)) for m in cfg.sweep.compare_minutes))
        if cfg.sweep.compartments is not None:
            lines.append("COMPARE_COMPARTMENTS = " + ", ".join(str(c) for c in cfg.sweep.compartments))
        lines.append(f"TARGET = {cfg.target}")
        lines.append(f"TARGET_RUNS = {cfg.target_runs}")
    if cfg.engine in ("ssa", "ode"):
        lines.append(f"FINAL_TIME = {_fmt(float(cfg.final_time))}")
    lines.append(f"SAMPLE_INTERVAL = {_fmt(float(cfg.sample_interval))}")
    lines.append(f"DT = {_fmt(float(cfg.dt))}")
    if cfg.seed is not None:
        lines.append(f"SEED = {cfg.seed}")
    lines.append(f"N_RUNS = {cfg.n_runs}")
    lines.append(f"SOURCE_MODE = {cfg.source_mode}")
    if cfg.snapshot_minutes:
        lines.append("SNAPSHOT_MINUTES = " + ", ".join(_fmt(float(m)) for m in cfg.snapshot_minutes))
    if cfg.output_dir is not None:
        lines.append(f"OUTPUT_DIR = {cfg.output_dir}")
    return "\n".join(lines) + "\n"
