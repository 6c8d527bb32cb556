import csv
import io
import json

import numpy as np
import pytest

from trihybrid.experiments import (ExperimentSpec, ParseError, ValidationError, beam_pattern_grid,
                                   load_experiment, rate_tradeoff_sweep, run_comparison)
from trihybrid.experiments.cli import main
from trihybrid.experiments.io import canonical_json, content_hash, parse_experiment
from trihybrid.experiments.runner import build_scenario, cells, pattern_csv
from trihybrid.metrics import compose, sensing_gain
from trihybrid.model import Direction, SystemConfig, TriHybridBeamformer
from trihybrid.optimizer import initial_beamformer

SMALL_SYSTEM = {"num_users": 2, "ps_per_chain": 2, "num_sense_dirs": 3, "rate_threshold": 2.0}
FAST = {"max_outer": 6, "joint_inner": 20}


def write_spec(tmp_path, **overrides):
    data = {"system": SMALL_SYSTEM, "scenario": {"num_suppress": 1}, "optimizer": FAST, **overrides}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(data, indent=2))
    return path


# -- loading ------------------------------------------------------------------

def test_minimal_file_gets_defaults(tmp_path):
    path = tmp_path / "min.json"
    path.write_text("{}")
    spec = load_experiment(path)
    assert spec.schemes == ["TriHybrid"] and spec.seeds == [0]
    assert spec.sweep.variable == "none" and spec.grid_resolution == 1.0
    cfg = spec.base_config()
    assert (cfg.num_users, cfg.ps_per_chain, cfg.elements_per_rhs, cfg.num_sense_dirs) == (4, 4, 24, 5)
    assert cfg.snr_db == pytest.approx(10.0)


def test_unknown_key_is_named(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schemes": ["TriHybrid"],\n  "foo": 1\n}')
    with pytest.raises(ValidationError) as err:
        load_experiment(path)
    assert "foo" in str(err.value) and "line 3" in str(err.value)
    assert "foo" in err.value.keys


def test_decreasing_sweep_rejected():
    with pytest.raises(ValidationError, match="increasing"):
        parse_experiment('{"sweep": {"variable": "L", "values": [48, 24]}}')


@pytest.mark.parametrize("text", [
    '{"schemes": []}',
    '{"seeds": [1, 1]}',
    '{"schemes": ["Nope"]}',
    '{"optimizer": {"bogus": 1}}',
    '{"scenario": {"targets": [[10, 20]]}}',
    '{"sweep": {"variable": "none", "values": [1]}}',
])
def test_schema_errors(text):
    with pytest.raises(ValidationError):
        parse_experiment(text)


def test_parse_error_has_position():
    with pytest.raises(ParseError) as err:
        parse_experiment('{\n  "schemes": [\n}')
    assert err.value.line == 3


def test_explicit_angles_in_degrees():
    spec = parse_experiment(json.dumps({
        "system": {**SMALL_SYSTEM, "num_sense_dirs": 2},
        "scenario": {"users": [[30, 45], [60, 200]], "targets": [[10, 0], [80, 90]], "num_suppress": 1},
    }))
    scn = build_scenario(spec, spec.base_config(), 0)
    assert scn.sense_dirs[1].degrees() == pytest.approx((80, 90))
    assert scn.user_dirs[0].degrees() == pytest.approx((30, 45))
    assert scn.desired_gains[1] == 0.0


def test_swept_points_keep_base_desired_gains():
    spec = parse_experiment(json.dumps({"system": SMALL_SYSTEM, "sweep": {"variable": "L", "values": [8, 16]}}))
    b8 = build_scenario(spec, spec.config_at(8), 0).desired_gains
    b16 = build_scenario(spec, spec.config_at(16), 0).desired_gains
    np.testing.assert_array_equal(b8, b16)
    assert spec.config_at(16).elements_per_rhs == 16


def test_snr_and_rate_sweep_configs():
    spec = parse_experiment('{"sweep": {"variable": "SNR", "values": [0, 20]}}')
    assert spec.config_at(20).noise_power == pytest.approx(0.01)
    spec = parse_experiment('{"sweep": {"variable": "R_th", "values": [0, 3]}}')
    assert spec.config_at(3).rate_threshold == 3.0


def test_canonical_hash_ignores_key_order():
    assert canonical_json({"b": 1, "a": [1.5]}) == canonical_json({"a": [1.5], "b": 1})
    assert content_hash({"x": np.float64(2.0)}) == content_hash({"x": 2.0})


# -- comparison runs ----------------------------------------------------------

def test_comparison_counts_and_records(tmp_path):
    path = write_spec(tmp_path, schemes=["TriHybrid", "RhsHybrid"], seeds=[0, 1, 2],
                      sweep={"variable": "L", "values": [4, 8]})
    spec = load_experiment(path)
    rep = run_comparison(spec, out_dir=tmp_path / "out")
    files = sorted((tmp_path / "out" / "runs").glob("*.json"))
    assert len(files) == 12 and len(rep.run_files) == 12
    assert (tmp_path / "out" / "aggregate.csv").exists()

    recs = [json.loads(f.read_text()) for f in files]
    for r in recs:
        assert {"config_hash", "scenario_hash", "seed", "version", "trace", "final"} <= set(r)
        assert r["error"] is None
    # every scheme sees the same scenario in a cell
    by_cell = {}
    for r in recs:
        by_cell.setdefault((r["sweep"]["value"], r["seed"]), set()).add(r["scenario_hash"])
    assert all(len(v) == 1 for v in by_cell.values())

    rows = list(csv.DictReader(io.StringIO(rep.aggregate_path.read_text())))
    assert [(r["scheme"], r["sweep_value"]) for r in rows] == [
        ("TriHybrid", "4"), ("RhsHybrid", "4"), ("TriHybrid", "8"), ("RhsHybrid", "8")]
    for row in rows:
        ok = [r for r in recs if r["scheme"] == row["scheme"]
              and r["sweep"]["value"] == float(row["sweep_value"]) and r["converged"]]
        assert int(row["converged"]) == len(ok) and int(row["runs"]) == 3
        if ok:
            assert float(row["mean_sensing_error"]) == pytest.approx(
                np.mean([r["final"]["sensing_error"] for r in ok]), rel=1e-11)


def test_seed_offset_shifts_cells():
    spec = parse_experiment('{"seeds": [0, 1]}')
    assert [c.seed for c in cells(spec, seed_offset=10)] == [10, 11]


def test_failed_cell_is_recorded(tmp_path):
    # 5x5 phased array cannot be split over 2 RF chains
    path = write_spec(tmp_path, schemes=["TriHybrid", "PaHybrid:5x5"], seeds=[0])
    rep = run_comparison(load_experiment(path), out_dir=tmp_path / "o")
    pa = [r for r in rep.records if r["scheme"].startswith("PaHybrid")][0]
    assert pa["error"].startswith("PartitionError") and not pa["converged"]
    row = [r for r in rep.aggregate_rows if r["scheme"].startswith("PaHybrid")][0]
    assert row["failed"] == 1 and row["converged"] == 0


def test_rate_tradeoff(tmp_path):
    path = write_spec(tmp_path, seeds=[0, 1, 2], sweep={"variable": "R_th", "values": [0, 3]})
    rep = rate_tradeoff_sweep(load_experiment(path), out_dir=tmp_path / "t")
    runs = list(csv.DictReader(io.StringIO((tmp_path / "t" / "tradeoff_runs.csv").read_text())))
    assert all(r["mu_trajectory"] for r in runs)
    mean = {v: np.mean([float(r["sensing_error"]) for r in runs if r["rate_threshold"] == v])
            for v in ("0", "3")}
    assert mean["0"] <= mean["3"]
    for r in rep.records:
        if r["converged"]:
            assert r["final"]["min_rate"] >= r["sweep"]["value"]
    assert (tmp_path / "t" / "tradeoff.csv").exists()


# -- beam patterns ------------------------------------------------------------

def test_pattern_grid_size_and_order():
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=4)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    table = beam_pattern_grid(bf, cfg, 1.0)
    assert table.shape == (91 * 360, 4)
    assert table[0, 0] == 0 and table[359, 1] == 359 and table[360, 0] == 1
    rng = np.random.default_rng(1)
    eb = compose(bf)
    for k in rng.choice(len(table), 10, replace=False):
        t, p, g, db = table[k]
        ref = sensing_gain(eb, Direction(np.deg2rad(t), np.deg2rad(p)), cfg)
        assert g == pytest.approx(ref, rel=1e-9, abs=1e-300)
        assert db == pytest.approx(10 * np.log10(ref))
    assert beam_pattern_grid(bf, cfg, 2.0).shape == (46 * 180, 4)
    with pytest.raises(ValueError):
        beam_pattern_grid(bf, cfg, 0.7)


def test_zero_beamformer_pattern():
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=4)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    zero = bf.replace(rhs_amplitudes=np.zeros_like(bf.rhs_amplitudes))
    table = beam_pattern_grid(zero, cfg, 5.0)
    assert np.all(table[:, 2] == 0)
    assert pattern_csv(table[:2]).splitlines()[0] == "theta_deg,phi_deg,gain_linear,gain_db"


def test_beamformer_roundtrip_through_record():
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=4)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    back = TriHybridBeamformer.from_dict(json.loads(json.dumps(bf.to_dict())))
    np.testing.assert_array_equal(beam_pattern_grid(back, cfg, 10.0), beam_pattern_grid(bf, cfg, 10.0))


# -- command line -------------------------------------------------------------

def test_cli_run_and_pattern(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ISAC_LOG", "ERROR")
    path = write_spec(tmp_path, seeds=[0, 1], output_dir=str(tmp_path / "default"))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o"), "--seed-offset", "3"]) == 0
    out = capsys.readouterr().out
    assert "PASS cells-completed" in out and "FAIL" not in out
    ckpt = tmp_path / "o" / "runs" / "TriHybrid__base__seed3.json"
    assert ckpt.exists()
    assert main(["pattern", "--config", str(path), "--checkpoint", str(ckpt), "--res", "5",
                 "--out", str(tmp_path / "p")]) == 0
    out = capsys.readouterr().out
    assert "PASS grid-size" in out and "PASS spot-check" in out
    lines = (tmp_path / "p" / "TriHybrid__base__seed3__pattern.csv").read_text().splitlines()
    assert len(lines) == 1 + 19 * 72


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--dims", "2,2,4,2", "--seeds", "3"]) == 0
    assert capsys.readouterr().out.count("PASS gradient-") == 3
    assert main(["gradcheck", "--dims", "2,2"]) == 2


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"foo": 1}')
    assert main(["run", "--config", str(bad)]) == 2
    assert "foo" in capsys.readouterr().err


def test_experiment_spec_is_frozen():
    spec = ExperimentSpec()
    with pytest.raises(Exception):
        spec.seeds = [3]
