"""Alternating optimisation of the tri-hybrid beamformer.

Each outer iteration updates the penalty coefficient, runs a few SQP steps on
the digital precoder (power constraint handled by a one-constraint KKT solve,
Armijo backtracking and a damped BFGS Hessian) and then alternates projected
gradient steps on the RHS amplitudes and the analog phases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .array import rhs_coefficient_matrix
from .gradients import grad_fa, grad_fd, grad_fe_amp, pack_digital, real_gradient, unpack_digital
from .metrics import Evaluation, Problem
from .model import (OptimizationResult, OptimizerParams, PenaltyState, Scenario,
                    SystemConfig, TraceRecord, TriHybridBeamformer, validate)

log = logging.getLogger(__name__)


class SingularHessian(np.linalg.LinAlgError):
    pass


class ZeroEntry(ValueError):
    """Constant-modulus projection of an entry with vanishing magnitude."""


@dataclass
class SqpState:
    x: np.ndarray
    B: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        if self.B is None:
            self.B = np.eye(self.x.size)


@dataclass
class DigitalUpdate:
    beamformer: TriHybridBeamformer
    line_search_failed: bool = False
    steps: int = 0


@dataclass
class StepSizes:
    """Adaptive projected-gradient step sizes, carried across outer loops."""

    amplitude: float = 1e-2
    phase: float = 1e-2


# -- penalty -----------------------------------------------------------------

def update_penalty(state: PenaltyState, min_rate: float, rate_threshold: float) -> PenaltyState:
    """Grow mu by rho while some user misses the threshold, shrink otherwise."""
    if min_rate < rate_threshold:
        mu = min(state.rho * state.mu, state.mu_max)
    else:
        mu = max(state.mu / state.rho, state.mu_min)
    return PenaltyState(mu=mu, rho=state.rho, mu_min=state.mu_min, mu_max=state.mu_max)


# -- SQP on the digital precoder ----------------------------------------------

def sqp_direction(B: np.ndarray, grad_f: np.ndarray, grad_p: np.ndarray,
                  p_val: float) -> tuple[np.ndarray, float]:
    """Solve the one-constraint QP subproblem in closed form.

    The multiplier comes from the bordered KKT system
    ``[[B, gp], [gp^T, 0]] [d; lam] = [-gf; -P]``, i.e.
    ``lam = (P - gp^T B^-1 gf) / (gp^T B^-1 gp)``, clamped at zero.  A
    negative value means the free step keeps the linearised constraint
    satisfied, so the constraint is dropped.
    """
    try:
        Bf = np.linalg.solve(B, grad_f)
        Bp = np.linalg.solve(B, grad_p)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc
    denom = grad_p @ Bp
    if not denom > 1e-300:
        return -Bf, 0.0
    lam = max((p_val - grad_p @ Bf) / denom, 0.0)
    return -(Bf + lam * Bp), float(lam)


def repair_power(bf: TriHybridBeamformer, budget: float) -> TriHybridBeamformer:
    """Scale F_D onto the power budget if it is exceeded."""
    p = bf.transmit_power()
    if p <= budget:
        return bf
    return bf.replace(digital=bf.digital * np.sqrt(budget / p))


def _bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Powell-damped BFGS update; skips degenerate pairs."""
    Bs = B @ s
    sBs = s @ Bs
    sy = s @ y
    if sBs <= 1e-300 or np.linalg.norm(y) == 0:
        return B
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1 - theta) * Bs
        sy = s @ y
    if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
        return B
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (B + B.T)


def _digital_terms(ev: Evaluation) -> tuple[np.ndarray, np.ndarray, float]:
    FA = ev.FA
    grad_f = real_gradient(grad_fd(ev))
    grad_p = real_gradient(FA.conj().T @ FA @ ev.bf.digital)
    p_val = float(np.sum(np.abs(ev.S) ** 2)) - ev.prob.power_budget
    return grad_f, grad_p, p_val


def optimize_digital(bf: TriHybridBeamformer, prob: Problem, mu: float,
                     params: OptimizerParams) -> DigitalUpdate:
    """Run up to ``sqp_inner`` SQP iterations on F_D with A, F_E fixed."""
    M = bf.num_users
    bf = repair_power(bf, prob.power_budget)
    ev = Evaluation(bf, prob, mu)
    grad_f, grad_p, p_val = _digital_terms(ev)
    x = pack_digital(bf.digital)
    scale = np.linalg.norm(grad_f) / (0.1 * max(np.linalg.norm(x), 1e-6))
    state = SqpState(x=x, B=np.eye(x.size) * max(scale, 1e-12))
    failed = False
    steps = 0
    first = True
    for _ in range(params.sqp_inner):
        if not np.any(grad_f):
            break
        try:
            d, _ = sqp_direction(state.B, grad_f, grad_p, p_val)
        except SingularHessian:
            d = -grad_f
        slope = grad_f @ d
        if not slope < 0:
            d = -np.linalg.solve(state.B, grad_f)
            slope = grad_f @ d
            if not slope < 0:
                d = -grad_f
                slope = grad_f @ d
        alpha = 1.0
        f0 = ev.objective
        accepted = None
        for _ in range(params.max_backtracks):
            trial = repair_power(bf.replace(digital=unpack_digital(state.x + alpha * d, M)),
                                 prob.power_budget)
            ev_t = Evaluation(trial, prob, mu)
            if ev_t.objective <= f0 + params.armijo_c1 * alpha * slope:
                accepted = (trial, ev_t)
                break
            alpha *= params.backtrack_ratio
        if accepted is None:
            failed = True
            log.debug("SQP line search failed after %d backtracks", params.max_backtracks)
            break
        bf, ev = accepted
        x_new = pack_digital(bf.digital)
        g_new, grad_p, p_val = _digital_terms(ev)
        s, yv = x_new - state.x, g_new - grad_f
        if first and s @ yv > 0:
            state.B = np.eye(x.size) * ((yv @ yv) / (s @ yv))
        state.B = _bfgs_update(state.B, s, yv)
        first = False
        state.x, state.alpha, grad_f = x_new, alpha, g_new
        steps += 1
    return DigitalUpdate(bf, failed, steps)


# -- projected gradient on amplitudes and phases ------------------------------

def project_amplitude(X) -> np.ndarray:
    """Clip every entry to [0, 1]."""
    return np.clip(np.asarray(X, dtype=float), 0.0, 1.0)


def project_unit_modulus(X) -> np.ndarray:
    """Entrywise x / |x|; raises :class:`ZeroEntry` on a vanishing entry."""
    X = np.asarray(X, dtype=complex)
    mag = np.abs(X)
    if np.any(mag < 1e-15):
        raise ZeroEntry("cannot project a zero entry onto the unit circle")
    return X / mag


def _project_phases(X: np.ndarray, previous: np.ndarray) -> np.ndarray:
    try:
        return np.angle(project_unit_modulus(X))
    except ZeroEntry:
        mag = np.abs(X)
        out = np.angle(np.where(mag < 1e-15, 1.0, X))
        return np.where(mag < 1e-15, previous, out)


def _adaptive_step(ev: Evaluation, step: float, make_trial, params: OptimizerParams):
    """Backtrack ``step`` until the objective does not increase.

    Returns ``(evaluation, new_step)``; the evaluation is unchanged when the
    step underflows.
    """
    f0 = ev.objective
    first = True
    while step >= params.step_min:
        ev_t = Evaluation(make_trial(step), ev.prob, ev.mu)
        if ev_t.objective <= f0:
            if first:
                step = min(2 * step, params.step_max)
            return ev_t, step
        first = False
        step *= 0.5
    return ev, params.step_min


def optimize_joint(bf: TriHybridBeamformer, prob: Problem, mu: float, params: OptimizerParams,
                   steps: StepSizes | None = None, *, optimize_analog: bool = True,
                   optimize_amplitudes: bool = True) -> TriHybridBeamformer:
    """Alternate projected-gradient steps on the amplitudes and the phases."""
    if steps is None:
        steps = StepSizes(params.step_init_fe, params.step_init_fa)
    ev = Evaluation(bf, prob, mu)
    idx = np.arange(bf.num_subarrays)
    for _ in range(params.joint_inner):
        if optimize_amplitudes:
            g = grad_fe_amp(ev)
            if np.any(g):
                # dF/da scales with the decaying |c_il|; undo that so tail
                # elements move as fast as the ones near the feed
                g = g / np.maximum(np.abs(ev.bf.rhs_phase_coeffs), 1e-12)
                g = g / np.max(np.abs(g))
                amps = ev.bf.rhs_amplitudes
                cur = ev.bf
                ev, steps.amplitude = _adaptive_step(
                    ev, steps.amplitude,
                    lambda e: cur.replace(rhs_amplitudes=project_amplitude(amps - e * g)),
                    params)
        if optimize_analog:
            g = grad_fa(ev)[idx, ev.bf.chain_of]
            if np.any(g):
                g = g / np.max(np.abs(g))
                cur = ev.bf
                x = np.exp(1j * cur.analog_phases)
                ev, steps.phase = _adaptive_step(
                    ev, steps.phase,
                    lambda e: cur.replace(
                        analog_phases=_project_phases(x - e * g, cur.analog_phases)),
                    params)
    return ev.bf


# -- Algorithm driver -----------------------------------------------------------

def initial_beamformer(cfg: SystemConfig, rng: np.random.Generator,
                       coeffs: np.ndarray | None = None,
                       amplitude: float = 0.5) -> TriHybridBeamformer:
    """Random feasible start: Gaussian F_D on the power budget, uniform phases,
    constant amplitudes."""
    M, nm = cfg.num_users, cfg.num_subarrays
    if coeffs is None:
        coeffs = rhs_coefficient_matrix(cfg)
    fd = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2)
    phases = rng.uniform(0.0, 2 * np.pi, nm)
    bf = TriHybridBeamformer(fd, phases, np.full(coeffs.shape, amplitude), coeffs)
    return bf.replace(digital=fd * np.sqrt(cfg.power_budget / bf.transmit_power()))


def penalty_problem(prob: Problem, params: OptimizerParams) -> Problem:
    """The problem whose penalty term is minimised: R_th raised by the margin."""
    return prob.replace(rate_threshold=prob.rate_threshold + params.rate_margin)


def solve(prob: Problem, params: OptimizerParams, init: TriHybridBeamformer, *,
          optimize_analog: bool = True, optimize_amplitudes: bool = True,
          optimize_digital_layer: bool = True,
          penalty: PenaltyState | None = None) -> OptimizationResult:
    """Outer loop on a prepared :class:`Problem`; see :func:`run`."""
    params.validate()
    threshold = prob.rate_threshold
    # the penalty aims slightly above R_th so its equilibrium lands on the feasible side
    prob = penalty_problem(prob, params)
    penalty = params.penalty if penalty is None else penalty
    bf = repair_power(init, prob.power_budget)
    ev = Evaluation(bf, prob, penalty.mu)
    prev_error = ev.sensing_error
    steps = StepSizes(params.step_init_fe, params.step_init_fa)
    trace: list[TraceRecord] = []
    converged = False
    for t in range(params.max_outer):
        penalty = update_penalty(penalty, ev.min_rate, threshold)
        if optimize_digital_layer:
            bf = optimize_digital(bf, prob, penalty.mu, params).beamformer
        bf = optimize_joint(bf, prob, penalty.mu, params, steps,
                            optimize_analog=optimize_analog,
                            optimize_amplitudes=optimize_amplitudes)
        ev = Evaluation(bf, prob, penalty.mu)
        trace.append(TraceRecord(ev.sensing_error, ev.min_rate, penalty.mu, ev.objective))
        log.debug("outer %d: J=%.6g Rmin=%.4f mu=%.4g F=%.6g", t + 1, ev.sensing_error,
                  ev.min_rate, penalty.mu, ev.objective)
        if ev.min_rate > threshold and abs(ev.sensing_error - prev_error) < params.tau:
            converged = True
            break
        prev_error = ev.sensing_error
    return OptimizationResult(bf, tuple(trace), converged, len(trace))


def refine_fixed_penalty(prob: Problem, params: OptimizerParams, init: TriHybridBeamformer,
                         mu: float, iterations: int, *, optimize_analog: bool = True,
                         optimize_amplitudes: bool = False) -> OptimizationResult:
    """Outer iterations with mu held fixed, so F never increases.

    Converged means the rate requirement holds at the last iterate.
    """
    params.validate()
    threshold = prob.rate_threshold
    prob = penalty_problem(prob, params)
    bf = init
    steps = StepSizes(params.step_init_fe, params.step_init_fa)
    ev = Evaluation(bf, prob, mu)
    prev_error = ev.sensing_error
    trace: list[TraceRecord] = []
    for _ in range(iterations):
        bf = optimize_digital(bf, prob, mu, params).beamformer
        bf = optimize_joint(bf, prob, mu, params, steps, optimize_analog=optimize_analog,
                            optimize_amplitudes=optimize_amplitudes)
        ev = Evaluation(bf, prob, mu)
        trace.append(TraceRecord(ev.sensing_error, ev.min_rate, mu, ev.objective))
        if ev.min_rate > threshold and abs(ev.sensing_error - prev_error) < params.tau:
            break
        prev_error = ev.sensing_error
    return OptimizationResult(bf, tuple(trace), bool(ev.min_rate > threshold), len(trace))


def run(scn: Scenario, cfg: SystemConfig, params: OptimizerParams | None = None,
        init: TriHybridBeamformer | None = None, seed: int | None = None) -> OptimizationResult:
    """Optimise the tri-hybrid beamformer for ``scn``.

    Without ``init`` a random start is drawn from ``seed`` (default: the
    scenario seed).
    """
    validate(cfg, scn)
    params = params or OptimizerParams()
    if init is None:
        rng = np.random.default_rng(scn.seed if seed is None else seed)
        init = initial_beamformer(cfg, rng)
    return solve(Problem.build(scn, cfg), params, init)
