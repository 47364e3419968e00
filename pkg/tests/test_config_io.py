import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicoidsim.abm import AbmConfig
from bicoidsim.config import ConfigError, parse_config, render_config
from bicoidsim.io import decimate, meta_path, read_trajectory, write_snapshots, write_trajectory
from bicoidsim.model import Trajectory, reference_params
from bicoidsim.ode import solve_mean_field
from bicoidsim.ssa import run_ssa


def test_abm_document_gives_defaults():
    cfg = parse_config("ENGINE = abm")
    assert cfg.abm == AbmConfig()
    assert cfg.sample_interval == 1.0
    assert cfg.model is None


def test_source_time_decay_is_minute_144():
    cfg = parse_config("engine = abm\nsource_time_decay = 8640")
    assert cfg.abm.source_time_decay / 60 == 144


def test_hop_probability_sum_error_names_key():
    with pytest.raises(ConfigError) as err:
        parse_config("ENGINE = abm\nPROB_RIGHT = 0.6\nPROB_LEFT = 0.6")
    assert err.value.key == "PROB_RIGHT"


@pytest.mark.parametrize("text,key", [
    ("ENGINE = ssa", "S0"),
    ("ENGINE = ode\nS0 = 1\nFOO = 3", "FOO"),
    ("ENGINE = ssa\nS0 = 1\nH = 0", "H"),
    ("ENGINE = ssa\nS0 = 1\nFINAL_TIME = 600\nSNAPSHOT_MINUTES = 5, 20", "SNAPSHOT_MINUTES"),
    ("ENGINE = ssa\nS0 = 1\nS0 = 2", "S0"),
    ("ENGINE = ssa\nS0 = fast", "S0"),
    ("ENGINE = abm\nN_ITERATIONS = 100.5", "N_ITERATIONS"),
    ("ENGINE = ode\nS0 = 1\nRUNS_PER_CASE = 4", "RUNS_PER_CASE"),
    ("ENGINE = warp", "ENGINE"),
    ("ENGINE = sweep\nSWEEP_PROB_RIGHT = 0.1:0.3:0.1", "TARGET"),
    ("ENGINE = ssa\nS0 = 1\nSOURCE_MODE = cubic", "SOURCE_MODE"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key
    assert str(err.value).startswith(key + ":")


def test_comments_and_case():
    cfg = parse_config("# run\nengine = ode  # deterministic\ns0 = 2.5\n\ntau_p = 600\n")
    assert cfg.model == reference_params(s0=2.5, tau_p=600.0)


def test_default_snapshots_follow_horizon():
    assert parse_config("ENGINE = ode\nS0 = 1").snapshot_minutes == (60, 100, 144, 180, 200)
    assert parse_config("ENGINE = ode\nS0 = 1\nFINAL_TIME = 6000").snapshot_minutes == (60, 100)


def test_sweep_table3_preset():
    cfg = parse_config("ENGINE = sweep\nSWEEP_PRESET = table3\nTARGET = ode\nS0 = 10\nSEED = 1")
    assert cfg.sweep.n_cases == 5625
    assert cfg.model.s0 == 10.0


positive = st.floats(0.01, 1000, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


@st.composite
def configs(draw):
    engine = draw(st.sampled_from(["ssa", "ode", "abm", "sweep"]))
    pairs = {"ENGINE": engine}
    if engine in ("ssa", "ode") or draw(st.booleans()):
        pairs.update(S0=draw(st.floats(0, 100)), N_COMPARTMENTS=draw(st.integers(2, 200)),
                     H=draw(positive), D=draw(st.floats(0, 50)), T0=draw(st.floats(0, 1e4)),
                     TAU_P=draw(positive), TAU_M=draw(positive))
    if engine in ("ssa", "ode"):
        pairs["FINAL_TIME"] = draw(st.floats(1, 2e4))
        pairs["SAMPLE_INTERVAL"] = draw(st.floats(0.5, 600))
    if engine in ("abm", "sweep"):
        pr = draw(st.floats(0, 0.5))
        pairs.update(PROB_RIGHT=pr, PROB_LEFT=draw(st.floats(0, 1 - pr - 1e-9)) if pr < 0.99 else 0.0,
                     PROTEIN_DECAY_RATE=draw(unit), SOURCE_DECAY_RATE=draw(unit),
                     SOURCE_PRODUCTION_PROB=draw(unit), N_ITERATIONS=draw(st.integers(3600, 20000)),
                     SOURCE_TIME_PRODUCE=draw(st.integers(1, 100)),
                     DIE=draw(st.floats(1e-6, 0.5)),
                     PRESET=draw(st.sampled_from(["standard", "table3-best"])))
        if "N_COMPARTMENTS" not in pairs:
            pairs["N_COMPARTMENTS"] = draw(st.integers(2, 200))
    if engine == "sweep":
        pairs["TARGET"] = "ssa" if "S0" in pairs else "target.csv"
        pairs["SWEEP_PROB_LEFT"] = "0.0:0.2:0.1"
        pairs["COMPARE_MINUTES"] = "10, 60"
        pairs["RUNS_PER_CASE"] = draw(st.integers(1, 50))
    if engine != "ode":
        pairs["SEED"] = draw(st.integers(0, 2**63))
    pairs["N_RUNS"] = draw(st.integers(1, 100))
    text = "\n".join(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in pairs.items())
    return parse_config(text)


@settings(max_examples=200, deadline=None)
@given(configs())
def test_render_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg


def test_three_sample_csv(tmp_path):
    traj = Trajectory(np.array([0.0, 60.0, 120.0]), np.array([[0, 1], [2, 3], [4, 5]]), {"seed": 1})
    path = write_trajectory(traj, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines == ["time_s,c1,c2", "0.0,0,1", "60.0,2,3", "120.0,4,5"]
    meta = json.loads(meta_path(path).read_text())
    assert meta["value_type"] == "integer" and meta["seed"] == 1 and "artifact_version" in meta


def test_round_trip_preserves_values(tmp_path):
    traj = solve_mean_field(reference_params(s0=10.0), 600.0)
    back = read_trajectory(write_trajectory(traj, tmp_path / "ode.csv"))
    assert back.samples.tobytes() == traj.samples.tobytes()
    assert back.sample_times.tolist() == traj.sample_times.tolist()
    assert back.meta["value_type"] == "real"


def test_integer_versus_real_cells(tmp_path):
    ssa = run_ssa(reference_params(s0=1.0), 600.0, 60.0, seed=1)
    ode = solve_mean_field(reference_params(s0=1.0), 600.0)
    ssa_text = write_trajectory(ssa, tmp_path / "a.csv").read_text().splitlines()[-1]
    ode_text = write_trajectory(ode, tmp_path / "b.csv").read_text().splitlines()[-1]
    assert all("." not in c for c in ssa_text.split(",")[1:])
    assert all("." in c or "e" in c for c in ode_text.split(",")[1:])
    assert read_trajectory(tmp_path / "a.csv").is_integer


def test_same_seed_byte_identical_files(tmp_path):
    p = reference_params(s0=1.0)
    a = write_trajectory(run_ssa(p, 1200.0, 60.0, seed=4), tmp_path / "a.csv")
    b = write_trajectory(run_ssa(p, 1200.0, 60.0, seed=4), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert meta_path(a).read_bytes() == meta_path(b).read_bytes()


def test_snapshot_blocks(tmp_path):
    traj = run_ssa(reference_params(s0=1.0), 12000.0, 60.0, seed=2)
    path = write_snapshots(traj, (60, 100, 144, 180, 200), tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "minute,sample_time_s,compartment,count"
    assert len(lines) == 1 + 5 * 100
    assert lines[1].startswith("60.0,3600.0,1,")


def test_snapshot_minute_zero_is_empty(tmp_path):
    traj = run_ssa(reference_params(s0=1.0), 600.0, 60.0, seed=2)
    lines = write_snapshots(traj, (0,), tmp_path / "s.csv").read_text().splitlines()[1:]
    assert len(lines) == 100 and all(line.endswith(",0") for line in lines)


def test_snapshot_nearest_sample_recorded(tmp_path):
    traj = run_ssa(reference_params(s0=1.0), 600.0, 60.0, seed=2)
    path = write_snapshots(traj, (2.4,), tmp_path / "s.csv")
    meta = json.loads(meta_path(path).read_text())
    assert meta["snapshot_sample_times"] == {"2.4": 120.0}
    with pytest.raises(ValueError, match="outside"):
        write_snapshots(traj, (30,), tmp_path / "x.csv")


def test_decimate_keeps_grid_multiples():
    traj = Trajectory(np.arange(11.0), np.arange(22).reshape(11, 2))
    d = decimate(traj, 5.0)
    assert d.sample_times.tolist() == [0.0, 5.0, 10.0]
    with pytest.raises(ValueError):
        decimate(traj, 2.5)
