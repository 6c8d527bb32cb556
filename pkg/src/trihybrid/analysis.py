"""Executable versions of the structural results about the tri-hybrid array.

* phase alignment: how much subarray-level phase control can add to a gain;
* element-count increments: the exact change of a gain when an RHS element
  is appended, and where that change saturates;
* per-element quadratic models of the objective and the 0/1 decision they
  imply, plus the exact 1-bit quantiser;
* boundary statistics and a wall-time scaling probe.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array import planar_response, rhs_coefficient_matrix, steering_grid
from .metrics import LN2, Evaluation, Problem
from .model import Direction, RangeError, Scenario, SystemConfig, TriHybridBeamformer


class AssumptionViolated(ValueError):
    """The instance leaks inter-user interference, so the closed forms do not apply."""


# -- phase alignment ----------------------------------------------------------

@dataclass(frozen=True)
class GainAnalysis:
    """Per-subarray responses toward one direction and the gains they allow.

    ``rho[i] = a_{p,i}^H F_{E,i} u_i`` with ``u_i`` the magnitude of the
    i-th phase-shifter output; ``fixed_phases`` are the phases that output
    currently has and ``optimal_phases`` make every term real and
    non-negative.
    """

    rho: np.ndarray
    magnitudes: np.ndarray
    fixed_phases: np.ndarray
    optimal_phases: np.ndarray
    fixed_gain: float
    aligned_gain: float
    slack: float

    @property
    def phase_gain_increment(self) -> float:
        return self.aligned_gain - self.fixed_gain

    @property
    def increment_bound(self) -> float:
        """Cauchy-Schwarz lower bound ``2 zeta sqrt(G_bar)`` on the increment."""
        return 2.0 * self.slack * np.sqrt(self.fixed_gain)


def phase_alignment(bf: TriHybridBeamformer, direction: Direction,
                    cfg: SystemConfig) -> GainAnalysis:
    """Compare the current gain toward ``direction`` with the phase-aligned one."""
    a = steering_grid(direction, cfg)                               # (NM, L)
    t = np.sum(a.conj() * bf.element_weights, axis=1)               # a_{p,i}^H F_{E,i}
    out = bf.analog_matrix @ bf.digital.sum(axis=1)                 # [F_A F_D 1]_i
    u = np.abs(out)
    fixed = np.angle(out)
    rho = t * u
    optimal = np.mod(-np.angle(rho), 2 * np.pi)
    total = np.abs(rho).sum()
    current = np.abs(np.sum(rho * np.exp(1j * fixed)))
    return GainAnalysis(rho=rho, magnitudes=u, fixed_phases=fixed, optimal_phases=optimal,
                        fixed_gain=float(current ** 2), aligned_gain=float(total ** 2),
                        slack=float(max(total - current, 0.0)))


def install_phases(bf: TriHybridBeamformer, output_phases: np.ndarray) -> TriHybridBeamformer:
    """Set the analog phases so that the phase-shifter outputs carry ``output_phases``.

    Subarrays whose chain carries no sensing signal keep their phase.
    """
    d = bf.digital.sum(axis=1)[bf.chain_of]
    psi = np.where(np.abs(d) > 0, np.asarray(output_phases) - np.angle(d), bf.analog_phases)
    return bf.replace(analog_phases=psi)


# -- element-count increments -------------------------------------------------

@dataclass(frozen=True)
class GainIncrement:
    """Gain toward one direction as elements are appended to every RHS.

    Arrays are indexed like ``element_counts``.  ``xi`` is the complex array
    factor ``a^H w`` (its squared magnitude is the gain), ``gamma`` the
    response of the appended element row and ``energy`` its coefficient
    ``w_{L+1}``.  ``increments`` come from the closed form, ``direct`` from
    subtracting gains.
    """

    element_counts: np.ndarray
    gains: np.ndarray
    increments: np.ndarray
    direct: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray
    energy: np.ndarray
    tolerance: float
    saturation: int | None

    @property
    def max_identity_error(self) -> float:
        scale = max(float(np.max(np.abs(self.direct))), 1e-300)
        return float(np.max(np.abs(self.increments - self.direct)) / max(scale, 1.0))


def _element_responses(direction: Direction, cfg: SystemConfig, count: int) -> np.ndarray:
    """Unnormalised planar response (unit-modulus entries), shape (N*M, count).

    Shared elements must keep the same response when ``L`` grows, so the
    1/sqrt(N*M*L) normalisation of the steering vector is left out.
    """
    nm = cfg.num_subarrays
    a = planar_response(direction.elevation, direction.azimuth, nm, count,
                        cfg.spacing_x, cfg.spacing_y, cfg.wavelength)
    return a * np.sqrt(nm * count)


def gain_increment_profile(bf: TriHybridBeamformer, directions: Sequence[Direction] | Scenario,
                           element_counts: Sequence[int], cfg: SystemConfig, *,
                           reference_count: int = 8, rel_tol: float = 1e-6) -> list[GainIncrement]:
    """Closed-form and direct gain increments ``G(L+1) - G(L)`` for each L.

    ``bf`` supplies the amplitudes of at least ``max(L) + 1`` elements per
    subarray together with the digital and analog layers; the L-element
    beamformer uses the first L of them.  Coefficients are recomputed from
    ``cfg`` so ``bf.rhs_phase_coeffs`` is ignored.  The saturation index is
    the first L whose increment magnitude is below ``rel_tol * G(reference)``.
    """
    if isinstance(directions, Scenario):
        directions = directions.sense_dirs
    counts = np.asarray(sorted(set(int(c) for c in element_counts)))
    if counts.size == 0 or counts[0] < 1:
        raise RangeError("element counts must be positive")
    top = int(max(counts.max(), reference_count)) + 1
    if bf.rhs_amplitudes.shape[1] < top:
        raise RangeError(f"template has {bf.rhs_amplitudes.shape[1]} elements, need {top}")
    amps = bf.rhs_amplitudes[:, :top]
    coeffs = rhs_coefficient_matrix(cfg, top)
    energy_all = np.abs(coeffs[0])
    phase_all = coeffs[0] / energy_all
    u = bf.analog_matrix @ bf.digital.sum(axis=1)                  # complex outputs
    out = []
    for d in directions:
        h = _element_responses(d, cfg, top)
        # per-element contribution conj(a) * a_il * c_il * u_i, summed over subarrays
        contrib = np.sum(h.conj() * amps * coeffs * u[:, None], axis=0)
        xi_all = np.concatenate([[0.0], np.cumsum(contrib)])        # xi(L) for L = 0..top
        gamma_all = np.sum(h.conj() * amps * phase_all * u[:, None], axis=0)
        xi = xi_all[counts]
        gamma = gamma_all[counts]                                   # element index L is the (L+1)-th
        w = energy_all[counts]
        gains = np.abs(xi) ** 2
        inc = 2 * w * np.real(xi.conj() * gamma) + w ** 2 * np.abs(gamma) ** 2
        direct = np.abs(xi_all[counts + 1]) ** 2 - gains
        tol = rel_tol * float(np.abs(xi_all[reference_count]) ** 2)
        small = np.nonzero(np.abs(inc) < tol)[0]
        sat = int(counts[small[0]]) if small.size else None
        out.append(GainIncrement(counts, gains, inc, direct, xi, gamma, w, tol, sat))
    return out


# -- quadratic model of one amplitude -----------------------------------------

@dataclass(frozen=True)
class QuadraticModel:
    """``F(a) ~ f0 + f1 a + f2 a^2`` along amplitude (i, l).

    ``f1`` is the derivative at zero and ``f2`` the coefficient of ``a^2``
    (half the second derivative).
    """

    index: tuple[int, int]
    f0: float
    f1: float
    f2: float

    @property
    def stationary_point(self) -> float:
        if self.f2 == 0:
            return float("inf") if self.f1 <= 0 else float("-inf")
        return -self.f1 / (2 * self.f2)

    @property
    def on_boundary(self) -> bool:
        s = self.stationary_point
        return not (self.f2 > 0 and 0 < s < 1)

    def value(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return self.f0 + self.f1 * a + self.f2 * a ** 2


def _interference_leak(ev: Evaluation) -> float:
    off = ev.Y.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.max(np.abs(off))) if off.size else 0.0


def quadratic_coeffs(bf: TriHybridBeamformer, scn: Scenario | Problem, cfg: SystemConfig | None,
                     mu: float, i: int, l: int, *, leak_tol: float = 1e-8) -> QuadraticModel:
    """Closed-form constant, slope and curvature of F along amplitude ``(i, l)``.

    Valid when no user sees another user's stream; raises
    :class:`AssumptionViolated` otherwise.  Indices are 0-based.
    """
    prob = scn if isinstance(scn, Problem) else Problem.build(scn, cfg)
    ev0 = Evaluation(bf, prob, mu)
    nm, L = bf.rhs_amplitudes.shape
    if not (0 <= i < nm and 0 <= l < L):
        raise RangeError(f"element ({i}, {l}) outside ({nm}, {L})")
    amps = np.array(bf.rhs_amplitudes)
    amps[i, l] = 0.0
    ev = Evaluation(bf.replace(rhs_amplitudes=amps), prob, mu)
    # interference is affine in a_il, so zero at a = 0 and at the current a covers every a
    leak = max(_interference_leak(ev), _interference_leak(ev0))
    if leak > leak_tol:
        raise AssumptionViolated(f"inter-user leakage {leak:.3g} exceeds {leak_tol:g}")
    c = bf.rhs_phase_coeffs[i, l]
    z = ev.y
    q = prob.steering[:, i, l].conj() * c * ev.s_sum[i]
    p = np.diag(ev.Y)
    delta = prob.channels[:, i, l].conj() * c * ev.S[i, :]
    b = prob.desired
    s2 = prob.noise_power

    e = np.abs(z) ** 2 - b
    re_zq = np.real(z.conj() * q)
    f0 = float(np.sum(e ** 2))
    f1 = float(np.sum(4 * e * re_zq))
    f2 = float(0.5 * np.sum(8 * re_zq ** 2 + 4 * e * np.abs(q) ** 2))
    if mu != 0.0:
        snr = np.abs(p) ** 2 / s2
        v = np.maximum(0.0, prob.rate_threshold - np.log2(1 + snr))
        active = v > 0
        re_pd = np.real(p.conj() * delta)
        f0 += mu * float(np.sum(v ** 2))
        f1 -= mu * float(np.sum(4 * v / (LN2 * s2) / (1 + snr) * re_pd))
        curv = (active * 8 * re_pd ** 2 / (LN2 ** 2 * s2 ** 2 * (1 + snr) ** 2)
                + 2 * v / LN2 * (4 * re_pd ** 2 / ((1 + snr) ** 2 * s2 ** 2)
                                 - 2 * np.abs(delta) ** 2 / ((1 + snr) * s2)))
        f2 += 0.5 * mu * float(np.sum(curv))
    return QuadraticModel((i, l), f0, f1, f2)


def zero_interference_instance(cfg: SystemConfig, seed: int,
                               desired_gains=None) -> tuple[TriHybridBeamformer, Scenario]:
    """Random instance on which no user sees another user's stream.

    Each user channel is cut down to the subarrays of its own RF chain and
    the digital precoder is diagonal, so ``h_k^H G F_A f_{D,j} = 0`` for
    ``k != j`` by construction.
    """
    from .optimizer import initial_beamformer
    from .scenario import random_scenario

    rng = np.random.default_rng(seed)
    scn = random_scenario(cfg, seed, desired_gains=desired_gains)
    nm, L = cfg.num_subarrays, cfg.elements_per_rhs
    chain = np.arange(nm) // cfg.ps_per_chain
    own = chain[None, :] == np.arange(cfg.num_users)[:, None]          # (M, NM)
    H = scn.channels.reshape(cfg.num_users, nm, L) * own[:, :, None]
    scn = Scenario(H.reshape(cfg.num_users, -1), scn.sense_dirs, scn.desired_gains,
                   seed=seed, user_dirs=scn.user_dirs)
    bf = initial_beamformer(cfg, rng)
    bf = bf.replace(digital=np.diag(np.diag(bf.digital)),
                    rhs_amplitudes=rng.uniform(0.0, 1.0, bf.rhs_amplitudes.shape))
    return bf.replace(digital=bf.digital * np.sqrt(cfg.power_budget / bf.transmit_power())), scn


def boundary_decision(model: QuadraticModel) -> float:
    """Minimiser of the quadratic model over [0, 1]; boundary ties go to 0."""
    if not model.on_boundary:
        return float(model.stationary_point)
    return 1.0 if model.f1 + model.f2 < 0 else 0.0


# -- 1-bit quantisation -------------------------------------------------------

class _Incremental:
    """Objective under single-amplitude changes in O(P + M^2) per trial."""

    def __init__(self, bf: TriHybridBeamformer, prob: Problem, mu: float):
        ev = Evaluation(bf, prob, mu)
        self.prob, self.mu = prob, float(mu)
        self.coeffs = bf.rhs_phase_coeffs
        self.s_sum, self.S = ev.s_sum, ev.S
        self.y, self.Y = ev.y.copy(), ev.Y.copy()
        self.value = self.objective(self.y, self.Y)

    def objective(self, y, Y) -> float:
        prob = self.prob
        f = float(np.sum((np.abs(y) ** 2 - prob.desired) ** 2))
        if self.mu != 0.0 and Y.size:
            p2 = np.abs(Y) ** 2
            sig = np.diag(p2)
            interf = p2.sum(axis=1) - sig + prob.noise_power
            rates = np.log2(1 + sig / interf)
            f += self.mu * float(np.sum(np.maximum(0.0, prob.rate_threshold - rates) ** 2))
        return f

    def trial(self, i: int, l: int, delta: float):
        c = delta * self.coeffs[i, l]
        y = self.y + c * self.prob.steering[:, i, l].conj() * self.s_sum[i]
        Y = self.Y + c * np.outer(self.prob.channels[:, i, l].conj(), self.S[i, :])
        return self.objective(y, Y), y, Y


def quantize_1bit_problem(bf: TriHybridBeamformer, prob: Problem, mu: float,
                          passes: int = 1) -> TriHybridBeamformer:
    """See :func:`quantize_1bit`; works on a prepared :class:`Problem`."""
    amps = (np.asarray(bf.rhs_amplitudes) > 0.5).astype(float)
    state = _Incremental(bf.replace(rhs_amplitudes=amps), prob, mu)
    nm, L = amps.shape
    for _ in range(passes):
        changed = False
        for i in range(nm):
            for l in range(L):
                cur = amps[i, l]
                f_new, y, Y = state.trial(i, l, 1.0 - 2.0 * cur)
                f0, f1 = (state.value, f_new) if cur == 0.0 else (f_new, state.value)
                target = 1.0 if f1 < f0 else 0.0
                if target != cur:
                    amps[i, l] = target
                    state.y, state.Y, state.value = y, Y, f_new
                    changed = True
        if not changed:
            break
    return bf.replace(rhs_amplitudes=amps)


def quantize_1bit(bf: TriHybridBeamformer, scn: Scenario, cfg: SystemConfig, mu: float,
                  passes: int = 1) -> TriHybridBeamformer:
    """Binary amplitudes by exact coordinate descent.

    Starts from rounding at 0.5, then visits every element once and keeps the
    value in {0, 1} with the smaller objective (ties to 0).  Each visit can
    only lower F, so the result is never worse than plain rounding.
    """
    return quantize_1bit_problem(bf, Problem.build(scn, cfg), mu, passes)


# -- statistics ---------------------------------------------------------------

def boundary_proportion(amplitudes, delta: float) -> float:
    """Fraction of amplitudes within ``delta`` of 0 or 1."""
    if not 0 < delta < 0.5:
        raise RangeError("delta must lie in (0, 0.5)")
    a = np.asarray(amplitudes, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    return float(np.mean((a <= delta) | (a >= 1 - delta)))


@dataclass(frozen=True)
class ComplexityReport:
    element_counts: tuple[int, ...]
    seconds_per_iteration: tuple[float, ...]
    exponent: float
    num_users: int
    ps_per_chain: int
    num_sense_dirs: int

    def ratio(self, small: int, large: int) -> float:
        t = dict(zip(self.element_counts, self.seconds_per_iteration))
        return t[large] / t[small]

    def to_dict(self) -> dict:
        return {
            "element_counts": list(self.element_counts),
            "seconds_per_iteration": list(self.seconds_per_iteration),
            "exponent": self.exponent,
            "num_users": self.num_users,
            "ps_per_chain": self.ps_per_chain,
            "num_sense_dirs": self.num_sense_dirs,
        }


def complexity_probe(cfg: SystemConfig, element_counts: Sequence[int], *, seeds: Sequence[int] = (0,),
                     outer_iterations: int = 3, repeats: int = 1) -> ComplexityReport:
    """Mean wall time per outer iteration for each L, with M, N, P fixed.

    Runs are forced to a fixed number of outer iterations so that every L
    does the same amount of algorithmic work.  The exponent is the slope of
    log(time) against log(L).
    """
    from .optimizer import OptimizerParams, run
    from .scenario import random_scenario

    params = OptimizerParams(max_outer=outer_iterations, tau=1e-300)
    times = []
    counts = tuple(int(c) for c in element_counts)
    for L in counts:
        c = cfg.replace(elements_per_rhs=L)
        spent, iters = 0.0, 0
        for seed in seeds:
            scn = random_scenario(c, seed)
            for _ in range(repeats):
                t0 = time.perf_counter()
                res = run(scn, c, params)
                spent += time.perf_counter() - t0
                iters += res.iterations
        times.append(spent / iters)
    if len(set(counts)) > 1:
        slope = float(np.polyfit(np.log(counts), np.log(times), 1)[0])
    else:
        slope = float("nan")
    return ComplexityReport(counts, tuple(times), slope, cfg.num_users, cfg.ps_per_chain,
                            cfg.num_sense_dirs)
