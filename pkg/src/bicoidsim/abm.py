"""Discrete-time agent-based engine: a source agent and diffusing protein agents.

One iteration is one simulated second and runs five phases in fixed order:
source update, production, movement, decay, census. Agents move in
creation order and every uniform comes from one sequential stream, so a seed
fixes the whole run.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import NamedTuple

import numba
import numpy as np

from .ensemble import EnsembleStats, aggregate, map_ordered
from .model import Trajectory
from .rng import UniformStream, make_generator, open_unit

PRODUCE_MODES = ("period", "initial-delay")
DEATH_MODES = ("life", "probabilistic")


@dataclass(frozen=True)
class AbmConfig:
    source_decay_rate: float = 0.01
    source_time_decay: int = 8640
    source_time_produce: int = 50
    source_production_prob: float = 1.0
    protein_decay_rate: float = 0.01
    compartment_dim_x: float = 5.0
    compartment_dim_y: float = 15.0
    prob_right: float = 0.5
    prob_left: float = 0.1
    die_threshold: float = 0.001
    n_compartments: int = 100
    n_iterations: int = 12000
    # interpretation switches
    produce_mode: str = "period"
    death_mode: str = "life"
    death_prob: float = 0.0

    def __post_init__(self):
        for name in ("source_production_prob", "prob_right", "prob_left", "death_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.prob_right + self.prob_left > 1.0 + 1e-12:
            raise ValueError(
                f"prob_right + prob_left must be <= 1, got {self.prob_right} + {self.prob_left}"
            )
        for name in ("source_decay_rate", "protein_decay_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.die_threshold < 1.0:
            raise ValueError(f"die_threshold must lie in (0, 1), got {self.die_threshold}")
        if self.source_time_decay < 0:
            raise ValueError("source_time_decay must be >= 0")
        if self.produce_mode not in PRODUCE_MODES:
            raise ValueError(f"produce_mode must be one of {PRODUCE_MODES}")
        if self.produce_mode == "period" and self.source_time_produce < 1:
            raise ValueError("source_time_produce must be >= 1 in period mode")
        if self.source_time_produce < 0:
            raise ValueError("source_time_produce must be >= 0")
        if self.death_mode not in DEATH_MODES:
            raise ValueError(f"death_mode must be one of {DEATH_MODES}")
        if self.n_compartments < 2:
            raise ValueError("n_compartments must be >= 2")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.compartment_dim_x <= 0 or self.compartment_dim_y <= 0:
            raise ValueError("compartment dimensions must be > 0")

    def replace(self, **changes) -> "AbmConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


STANDARD = AbmConfig()
TABLE3_BEST = AbmConfig(
    source_decay_rate=0.03,
    protein_decay_rate=0.01,
    prob_right=0.2,
    prob_left=0.3,
    source_production_prob=0.7,
)
PRESETS = {"standard": STANDARD, "table3-best": TABLE3_BEST}


@dataclass
class ProteinAgent:
    compartment: int  # 1-based
    life: float = 1.0


@dataclass
class SourceAgent:
    effective_production_prob: float
    alive: bool = True


@dataclass
class Population:
    source: SourceAgent
    agents: list[ProteinAgent] = field(default_factory=list)

    @classmethod
    def initial(cls, config: AbmConfig, compartments=()) -> "Population":
        return cls(SourceAgent(config.source_production_prob),
                   [ProteinAgent(int(c)) for c in compartments])


class StepResult(NamedTuple):
    population: Population
    histogram: np.ndarray
    produced: int
    died: int


def is_attempt(iteration: int, config: AbmConfig) -> bool:
    if config.produce_mode == "period":
        return iteration % config.source_time_produce == 0
    return iteration >= config.source_time_produce


def abm_step(population: Population, iteration: int, config: AbmConfig,
             rng: UniformStream) -> StepResult:
    """One iteration on a copy of ``population``; the reference for the jitted engine."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    n = config.n_compartments
    src = SourceAgent(population.source.effective_production_prob, population.source.alive)
    agents = [ProteinAgent(a.compartment, a.life) for a in population.agents]

    if src.alive and iteration >= config.source_time_decay:
        src.effective_production_prob *= 1.0 - config.source_decay_rate
        if src.effective_production_prob < config.die_threshold:
            src.alive = False

    produced = 0
    if src.alive and is_attempt(iteration, config):
        if rng.random() < src.effective_production_prob:
            agents.append(ProteinAgent(1, 1.0))
            produced = 1

    for a in agents:
        u = rng.random()
        if u < config.prob_right:
            if a.compartment < n:
                a.compartment += 1
        elif u < config.prob_right + config.prob_left:
            if a.compartment > 1:
                a.compartment -= 1

    survivors = []
    for a in agents:
        if config.death_mode == "life":
            a.life *= 1.0 - config.protein_decay_rate
            dead = a.life < config.die_threshold
        else:
            dead = rng.random() < config.death_prob
        if not dead:
            survivors.append(a)
    died = len(agents) - len(survivors)

    hist = np.zeros(n, dtype=np.int64)
    for a in survivors:
        hist[a.compartment - 1] += 1
    return StepResult(Population(src, survivors), hist, produced, died)


# ---------------------------------------------------------------------------
# jitted engine

@numba.njit(cache=True, nogil=True)
def _abm_kernel(comp, life, n_alive, it, last_it, src_prob, src_alive,
                n, decay_start, src_decay, produce_period, initial_delay, pr, pl,
                protein_decay, die, probabilistic, death_prob,
                samples, produced_log, died_log, prob_log, buf, pos):
    # status: 0 done, 1 refill stream, 2 grow agent arrays
    status = 0
    keep = 1.0 - protein_decay
    while it <= last_it:
        if pos + 2 * n_alive + 3 > buf.size:
            status = 1
            break
        if n_alive + 1 > comp.size:
            status = 2
            break
        if src_alive and it >= decay_start:
            src_prob *= 1.0 - src_decay
            if src_prob < die:
                src_alive = False
        prob_log[it] = src_prob if src_alive else 0.0
        produced = 0
        if src_alive:
            attempt = it >= produce_period if initial_delay else it % produce_period == 0
            if attempt:
                u = open_unit(buf[pos])
                pos += 1
                if u < src_prob:
                    comp[n_alive] = 0
                    life[n_alive] = 1.0
                    n_alive += 1
                    produced = 1
        for k in range(n_alive):
            u = open_unit(buf[pos])
            pos += 1
            if u < pr:
                if comp[k] < n - 1:
                    comp[k] += 1
            elif u < pr + pl:
                if comp[k] > 0:
                    comp[k] -= 1
        w = 0
        for k in range(n_alive):
            if probabilistic:
                u = open_unit(buf[pos])
                pos += 1
                dead = u < death_prob
            else:
                life[k] *= keep
                dead = life[k] < die
            if not dead:
                comp[w] = comp[k]
                life[w] = life[k]
                w += 1
        died_log[it] = n_alive - w
        produced_log[it] = produced
        n_alive = w
        for k in range(n_alive):
            samples[it, comp[k]] += 1
        it += 1
    return n_alive, it, src_prob, src_alive, pos, status


@dataclass
class AbmRun:
    trajectory: Trajectory
    produced: np.ndarray
    died: np.ndarray
    production_prob: np.ndarray


def simulate(config: AbmConfig, stream: UniformStream, initial_agents=()) -> AbmRun:
    """Run ``config.n_iterations`` iterations; row ``k`` is the census after iteration ``k``."""
    n = config.n_compartments
    last = config.n_iterations
    init = np.asarray(initial_agents, dtype=np.int64) - 1
    if init.size and (init.min() < 0 or init.max() >= n):
        raise ValueError("initial agents must sit in compartments 1..N")
    cap = max(64, 2 * init.size)
    comp = np.zeros(cap, dtype=np.int64)
    life = np.ones(cap, dtype=np.float64)
    comp[: init.size] = init
    n_alive = int(init.size)
    samples = np.zeros((last + 1, n), dtype=np.int64)
    np.add.at(samples[0], init, 1)
    produced = np.zeros(last + 1, dtype=np.int64)
    died = np.zeros(last + 1, dtype=np.int64)
    prob = np.zeros(last + 1, dtype=np.float64)
    prob[0] = config.source_production_prob
    it, src_prob, src_alive = 1, float(config.source_production_prob), True
    while it <= last:
        buf, pos = stream.window(64 * (2 * n_alive + 3) + (1 << 16))
        n_alive, it, src_prob, src_alive, pos, status = _abm_kernel(
            comp, life, n_alive, it, last, src_prob, src_alive,
            n, config.source_time_decay, config.source_decay_rate,
            max(config.source_time_produce, 1) if config.produce_mode == "period"
            else config.source_time_produce,
            config.produce_mode == "initial-delay", config.prob_right, config.prob_left,
            config.protein_decay_rate, config.die_threshold,
            config.death_mode == "probabilistic", config.death_prob,
            samples, produced, died, prob, buf, pos,
        )
        stream.advance(pos)
        if status == 2:
            comp = np.concatenate([comp, np.zeros(comp.size, dtype=np.int64)])
            life = np.concatenate([life, np.ones(life.size)])
    meta = {
        "engine": "abm",
        "config": config.to_dict(),
        "n_iterations": int(last),
        "sample_interval": 1.0,
        "produced_total": int(produced.sum()),
        "died_total": int(died.sum()),
        "draws": int(stream.drawn),
    }
    if init.size:
        meta["initial_agents"] = int(init.size)
    traj = Trajectory(np.arange(last + 1, dtype=np.float64), samples, meta)
    return AbmRun(traj, produced, died, prob)


def run_abm(config: AbmConfig, seed: int, initial_agents=()) -> Trajectory:
    traj = simulate(config, UniformStream(make_generator(seed)), initial_agents).trajectory
    traj.meta["seed"] = int(seed)
    return traj


def _member(run_index, *, config, base_seed, keys, initial_agents):
    stream = UniformStream(make_generator(base_seed, *keys, run_index))
    return simulate(config, stream, initial_agents).trajectory


def run_abm_ensemble(config: AbmConfig, n_runs: int = 20, base_seed: int = 0,
                     initial_agents=(), workers: int | None = None,
                     seed_keys: tuple[int, ...] = ()) -> EnsembleStats:
    """Per-iteration mean and std over ``n_runs`` runs, aggregated in run order.

    ``seed_keys`` extends the seed path ahead of the run index (the sweep uses
    it to give every parameter tuple its own streams).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    member = partial(_member, config=config, base_seed=base_seed, keys=tuple(seed_keys),
                     initial_agents=initial_agents)
    meta = {"engine": "abm-ensemble", "config": config.to_dict(),
            "n_iterations": int(config.n_iterations), "sample_interval": 1.0}
    if seed_keys:
        meta["seed_keys"] = [int(k) for k in seed_keys]
    return aggregate(map_ordered(member, range(n_runs), workers), base_seed, meta)
