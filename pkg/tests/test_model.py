import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trihybrid.array import rhs_coefficient_matrix
from trihybrid.model import (DimensionMismatch, Direction, OptimizationResult, OptimizerParams,
                             PenaltyState, RangeError, Scenario, SystemConfig, TraceRecord,
                             TriHybridBeamformer, validate)
from trihybrid.optimizer import initial_beamformer
from trihybrid.scenario import random_scenario


def test_defaults():
    cfg = SystemConfig()
    lam = 299_792_458.0 / 30e9
    assert cfg.carrier_freq == 30e9
    assert cfg.wavelength == pytest.approx(lam)
    assert cfg.spacing_x == pytest.approx(lam / 2)
    assert cfg.spacing_y == pytest.approx(lam / 4)
    assert cfg.surface_wavenumber == pytest.approx(2 * math.sqrt(3) * math.pi / lam)
    assert (cfg.num_users, cfg.ps_per_chain, cfg.num_sense_dirs) == (4, 4, 5)
    assert PenaltyState() == PenaltyState(mu=1.0, rho=1.5, mu_min=1.0, mu_max=1000.0)


def test_validate_accepts_matching_channel_length():
    cfg = SystemConfig(elements_per_rhs=48)
    scn = random_scenario(cfg, 0, num_suppress=2)
    assert scn.channels.shape == (4, 768)
    validate(cfg, scn)


def test_validate_rejects_short_channel():
    cfg = SystemConfig(elements_per_rhs=48)
    scn = random_scenario(cfg, 0, num_suppress=2)
    short = Scenario(scn.channels[:, :767], scn.sense_dirs, scn.desired_gains)
    with pytest.raises(DimensionMismatch):
        validate(cfg, short)


def test_validate_rejects_efficiency_above_one():
    cfg = SystemConfig(elements_per_rhs=4, radiation_efficiency=1.2)
    scn = random_scenario(SystemConfig(elements_per_rhs=4), 0)
    with pytest.raises(RangeError):
        validate(cfg, scn)


@pytest.mark.parametrize("change", [
    {"num_users": 0}, {"noise_power": 0.0}, {"power_budget": -1.0},
    {"rate_threshold": -0.5}, {"radiation_prob": 1.5}, {"radiation_efficiency": -0.1},
])
def test_config_range_errors(change):
    with pytest.raises(RangeError):
        SystemConfig(**change).validate()


def test_direction_ranges():
    Direction(math.pi / 2, 0.0).validate()
    with pytest.raises(RangeError):
        Direction(1.7, 0.0).validate()
    with pytest.raises(RangeError):
        Direction(0.3, 2 * math.pi).validate()


def test_desired_gain_rules():
    cfg = SystemConfig(elements_per_rhs=4)
    scn = random_scenario(cfg, 1)
    with pytest.raises(RangeError):
        validate(cfg, scn.with_desired_gains([1, 1, 1, 1, -1]))
    with pytest.raises(RangeError):
        validate(cfg, scn.with_desired_gains(np.zeros(5)))


@given(st.lists(st.floats(-50, 50), min_size=8, max_size=8))
def test_analog_matrix_unit_modulus_on_block_support(phases):
    cfg = SystemConfig(num_users=2, ps_per_chain=4, elements_per_rhs=3)
    coeffs = rhs_coefficient_matrix(cfg)
    bf = TriHybridBeamformer(np.eye(2), np.array(phases), np.full(coeffs.shape, 0.5), coeffs)
    FA = bf.analog_matrix
    assert np.max(np.abs(np.abs(FA[bf.block_mask]) - 1)) <= 1e-12
    assert np.all(FA[~bf.block_mask] == 0)
    assert np.all((bf.analog_phases >= 0) & (bf.analog_phases < 2 * np.pi))


def test_rhs_matrix_structure():
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=3)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    F_E = bf.rhs_matrix
    assert F_E.shape == (12, 4)
    for i in range(4):
        np.testing.assert_array_equal(F_E[3 * i:3 * i + 3, i], bf.element_weights[i])
        assert np.count_nonzero(F_E[:, i]) == 3


def test_beamformer_amplitude_range():
    cfg = SystemConfig(num_users=1, ps_per_chain=1, elements_per_rhs=2)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    with pytest.raises(RangeError):
        bf.replace(rhs_amplitudes=np.array([[0.5, 1.2]])).validate()


def test_optimizer_params_validation():
    OptimizerParams().validate()
    for bad in ({"tau": 0.0}, {"armijo_c1": 1.0}, {"backtrack_ratio": 0.0}, {"max_outer": 0}):
        with pytest.raises(RangeError):
            OptimizerParams(**bad).validate()
    with pytest.raises(RangeError):
        PenaltyState(rho=1.0).validate()
    with pytest.raises(RangeError):
        PenaltyState(mu=2000.0).validate()


def test_result_trace_length_must_match():
    cfg = SystemConfig(num_users=1, ps_per_chain=1, elements_per_rhs=2)
    bf = initial_beamformer(cfg, np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        OptimizationResult(bf, (TraceRecord(1.0, 2.0, 1.0, 1.0),), False, 2)


def _json_roundtrip(obj, cls):
    return cls.from_dict(json.loads(json.dumps(obj.to_dict())))


def test_serialization_roundtrips():
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=3, num_sense_dirs=3)
    assert _json_roundtrip(cfg, SystemConfig) == cfg
    params = OptimizerParams(max_outer=7, penalty=PenaltyState(mu=3.0))
    assert _json_roundtrip(params, OptimizerParams) == params

    bf = initial_beamformer(cfg, np.random.default_rng(3))
    back = _json_roundtrip(bf, TriHybridBeamformer)
    for name in ("digital", "analog_phases", "rhs_amplitudes", "rhs_phase_coeffs"):
        np.testing.assert_array_equal(getattr(back, name), getattr(bf, name))

    res = OptimizationResult(bf, (TraceRecord(1.5, 2.5, 1.0, 3.0),), True, 1)
    back = _json_roundtrip(res, OptimizationResult)
    assert back.trace == res.trace and back.converged and back.iterations == 1

    scn = random_scenario(cfg, 5, num_suppress=1)
    back = _json_roundtrip(scn, Scenario)
    np.testing.assert_array_equal(back.channels, scn.channels)
    np.testing.assert_array_equal(back.desired_gains, scn.desired_gains)
    # angles travel in degrees
    for a, b in zip(back.sense_dirs, scn.sense_dirs):
        assert a.elevation == pytest.approx(b.elevation, abs=1e-15)
        assert a.azimuth == pytest.approx(b.azimuth, abs=1e-15)
    assert len(back.paths) == 2 and back.seed == 5
