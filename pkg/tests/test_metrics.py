import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trihybrid.array import rhs_coefficient_matrix, steering_vector
from trihybrid.metrics import (Evaluation, Problem, compose, objective, rate_penalty, sensing_error,
                               sensing_gain, user_rate, user_rates)
from trihybrid.model import Direction, Scenario, SystemConfig, TriHybridBeamformer


def dense_triple(bf):
    return bf.rhs_matrix @ bf.analog_matrix @ bf.digital


def test_zero_amplitudes_annihilate(small_instance):
    cfg, scn, bf, _ = small_instance
    eb = compose(bf.replace(rhs_amplitudes=np.zeros_like(bf.rhs_amplitudes)))
    assert not np.any(eb.G) and not np.any(eb.sense_vector)
    d = scn.sense_dirs[0]
    assert sensing_gain(eb, d, cfg) == 0.0
    np.testing.assert_array_equal(user_rates(eb, scn, cfg), 0.0)


def test_scalar_chain():
    a, c, psi, d = 0.7, 0.3 - 0.4j, 1.1, 0.5 + 2j
    bf = TriHybridBeamformer(np.array([[d]]), np.array([psi]), np.array([[a]]), np.array([[c]]))
    assert compose(bf).sense_vector[0] == pytest.approx(a * c * np.exp(1j * psi) * d, abs=1e-15)


def test_composition_matches_dense_product(small_instance):
    _, _, bf, _ = small_instance
    eb = compose(bf)
    np.testing.assert_allclose(eb.G, bf.rhs_matrix @ bf.analog_matrix, atol=1e-14)
    np.testing.assert_allclose(eb.per_user, dense_triple(bf), atol=1e-14)
    np.testing.assert_allclose(eb.sense_vector, eb.per_user.sum(axis=1), atol=1e-12)


def test_gain_of_matched_vector():
    cfg = SystemConfig(num_users=1, ps_per_chain=2, elements_per_rhs=3)
    d = Direction.from_degrees(35, 80)
    a = steering_vector(d, cfg)
    P = 2.5
    w = (a * math.sqrt(P)).reshape(2, 3)
    # a single-user beamformer whose sense vector is sqrt(P) a
    bf = TriHybridBeamformer(np.ones((1, 1)), np.zeros(2), np.ones((2, 3)), w)
    assert sensing_gain(compose(bf), d, cfg) == pytest.approx(P, rel=1e-12)


def test_gain_matches_scalar_loop(small_instance):
    cfg, scn, bf, _ = small_instance
    w = compose(bf).sense_vector
    for d in scn.sense_dirs:
        a = steering_vector(d, cfg)
        acc = 0j
        for ai, wi in zip(a, w):
            acc += ai.conjugate() * wi
        assert sensing_gain(compose(bf), d, cfg) == pytest.approx(abs(acc) ** 2, rel=1e-12)


@given(st.floats(0, 2 * math.pi))
def test_global_phase_invariance(psi):
    cfg = SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=4, num_sense_dirs=2)
    rng = np.random.default_rng(0)
    fd = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    C = rhs_coefficient_matrix(cfg)
    bf = TriHybridBeamformer(fd, rng.uniform(0, 6, 4), rng.uniform(0, 1, C.shape), C)
    d = Direction.from_degrees(40, 200)
    g0 = sensing_gain(compose(bf), d, cfg)
    g1 = sensing_gain(compose(bf.replace(digital=fd * np.exp(1j * psi))), d, cfg)
    assert g1 == pytest.approx(g0, rel=1e-12)
    assert g0 >= 0


def test_single_user_unit_sinr():
    cfg = SystemConfig(num_users=1, ps_per_chain=1, elements_per_rhs=2, noise_power=0.25)
    h = np.array([[1.0, 1.0j]])
    # h^H w = 0.5 gives |h^H w|^2 = sigma^2
    bf = TriHybridBeamformer(np.array([[0.5]]), np.zeros(1), np.array([[1.0, 0.0]]),
                             np.ones((1, 2), dtype=complex))
    scn = Scenario(h, (Direction(0, 0),), [1.0])
    assert user_rate(compose(bf), 0, scn, cfg) == pytest.approx(1.0, abs=1e-15)


def test_rates_match_scalar_sinr(small_instance):
    cfg, scn, bf, _ = small_instance
    W = dense_triple(bf)
    H = scn.channels
    for m in range(2):
        sig = abs(np.vdot(H[m], W[:, m])) ** 2
        interf = sum(abs(np.vdot(H[m], W[:, j])) ** 2 for j in range(2) if j != m)
        expected = math.log2(1 + sig / (interf + cfg.noise_power))
        assert user_rate(compose(bf), m, scn, cfg) == pytest.approx(expected, rel=1e-12)


def test_sensing_error_examples():
    b = np.array([1.0, 2.0])
    assert sensing_error(b, b) == 0.0
    assert sensing_error([3.0, 4.0], [0.0, 0.0]) == 5.0
    with pytest.raises(ValueError):
        sensing_error([1.0], [1.0, 2.0])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=6).flatmap(
    lambda g: st.tuples(st.just(g), st.lists(st.floats(0, 100), min_size=len(g), max_size=len(g)))))
def test_sensing_error_scalar_oracle(pair):
    g, b = pair
    expected = math.sqrt(sum((x - y) ** 2 for x, y in zip(g, b)))
    assert sensing_error(g, b) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_objective_composition(small_instance):
    cfg, scn, bf, _ = small_instance
    eb = compose(bf)
    gains = [sensing_gain(eb, d, cfg) for d in scn.sense_dirs]
    rates = [user_rate(eb, m, scn, cfg) for m in range(2)]
    for mu in (0.0, 1.0, 7.5):
        expected = sensing_error(gains, scn.desired_gains) ** 2 + mu * rate_penalty(rates, cfg.rate_threshold)
        assert objective(bf, scn, cfg, mu) == pytest.approx(expected, rel=1e-12)


def test_objective_in_mu(small_instance):
    cfg, scn, bf, prob = small_instance
    # R_th = 6 is out of reach here, so the penalty is active and F grows with mu
    values = [objective(bf, scn, cfg, mu) for mu in (0.0, 1.0, 10.0, 100.0)]
    assert all(a < b for a, b in zip(values, values[1:]))
    easy = SystemConfig(**{**cfg.to_dict(), "rate_threshold": 0.0})
    assert len({objective(bf, scn, easy, mu) for mu in (0.0, 1.0, 10.0)}) == 1
    ev = Evaluation(bf, prob.replace(rate_threshold=0.0), 3.0)
    assert ev.objective == ev.sensing_sq == pytest.approx(ev.sensing_error ** 2)


def test_problem_matches_dense_path(small_instance):
    cfg, scn, bf, prob = small_instance
    ev = Evaluation(bf, prob, 2.0)
    eb = compose(bf)
    np.testing.assert_allclose(ev.gains, [sensing_gain(eb, d, cfg) for d in scn.sense_dirs], rtol=1e-12)
    np.testing.assert_allclose(ev.rates, user_rates(eb, scn, cfg), rtol=1e-12)
    assert isinstance(prob, Problem)
