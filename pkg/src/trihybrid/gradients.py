"""Closed-form Wirtinger gradients of the penalised objective.

All three gradients share one structure.  Every term of the objective is a
function of quantities of the form ``|t^H F_A f|^2`` where ``t`` collects the
element-weighted steering vector (sensing) or channel (rates).  For such a
term

    d|x|^2 / dF_D*  = (F_A^H t) x e_j^T       (x = t^H F_A f_{D,j})
    d|x|^2 / dF_A*  = x t f^H                 (masked to the block support)
    d|x|^2 / da_il  = 2 Re{ x* conj(t_il) c_il [F_A f]_i }

so each gradient is a weighted sum over the P sensing gains and the M x M
user/stream powers, with weights ``2 (G_p - b_p)`` and the SINR quotient-rule
factors of :meth:`Evaluation.rate_weights`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .metrics import Evaluation, Problem
from .model import TriHybridBeamformer


@dataclass(frozen=True)
class GradientBundle:
    grad_fd: np.ndarray       # (M, M) complex, dF/dF_D*
    grad_fa: np.ndarray       # (N*M, M) complex, dF/dF_A*, zero off the blocks
    grad_fe_amp: np.ndarray   # (N*M, L) real, dF/da


def _as_eval(bf, prob, mu) -> Evaluation:
    if isinstance(bf, Evaluation):
        return bf
    return Evaluation(bf, prob, mu)


def grad_fd(bf: TriHybridBeamformer | Evaluation, prob: Problem | None = None,
            mu: float = 0.0) -> np.ndarray:
    """Wirtinger gradient dF/dF_D*, shape (M, M)."""
    ev = _as_eval(bf, prob, mu)
    alpha = ev.sensing_weights()
    # sensing: sum_p alpha_p F_A^H (Ta_p^H y_p) 1^T
    sense_vec = ev.FA.conj().T @ (ev.Ta.conj().T @ (alpha * ev.y))
    M = ev.prob.num_users
    grad = np.outer(sense_vec, np.ones(M))
    if ev.mu != 0.0 and np.any(ev.shortfall > 0):
        omega = ev.rate_weights()
        # u_k = F_A^H Th_k^H; column j collects sum_k omega_kj u_k Y_kj
        U = ev.FA.conj().T @ ev.Th.conj().T            # (M, K)
        grad = grad + U @ (omega * ev.Y)
    return grad


def grad_fa(bf: TriHybridBeamformer | Evaluation, prob: Problem | None = None,
            mu: float = 0.0) -> np.ndarray:
    """Wirtinger gradient dF/dF_A* masked to the block-diagonal support."""
    ev = _as_eval(bf, prob, mu)
    alpha = ev.sensing_weights()
    fsum = ev.bf.digital.sum(axis=1)
    full = np.outer(ev.Ta.conj().T @ (alpha * ev.y), fsum.conj())
    if ev.mu != 0.0 and np.any(ev.shortfall > 0):
        omega = ev.rate_weights()
        # sum_kj omega_kj Y_kj Th_k^H f_j^H
        full = full + ev.Th.conj().T @ (omega * ev.Y) @ ev.bf.digital.conj().T
    return full * ev.bf.block_mask


def grad_fe_amp(bf: TriHybridBeamformer | Evaluation, prob: Problem | None = None,
                mu: float = 0.0) -> np.ndarray:
    """Real gradient of F with respect to every RHS amplitude, shape (N*M, L)."""
    ev = _as_eval(bf, prob, mu)
    coeffs = ev.bf.rhs_phase_coeffs
    alpha = ev.sensing_weights()
    # sum_p alpha_p conj(y_p) conj(a_p[i, l]) * s_sum[i]
    acc = np.einsum("p,pil->il", alpha * ev.y.conj(), ev.prob.steering.conj()) \
        * ev.s_sum[:, None]
    if ev.mu != 0.0 and np.any(ev.shortfall > 0):
        omega = ev.rate_weights()
        Z = (omega * ev.Y.conj()) @ ev.S.T          # (K, NM)
        acc = acc + np.einsum("ki,kil->il", Z, ev.prob.channels.conj())
    return 2.0 * np.real(coeffs * acc)


def gradients(bf: TriHybridBeamformer, prob: Problem, mu: float) -> GradientBundle:
    ev = Evaluation(bf, prob, mu)
    return GradientBundle(grad_fd(ev), grad_fa(ev), grad_fe_amp(ev))


def grad_phases(bf: TriHybridBeamformer | Evaluation, prob: Problem | None = None,
                mu: float = 0.0) -> np.ndarray:
    """dF/dpsi_i for the analog phases, via dF/dpsi = 2 Re{j e^{j psi} conj(g)}."""
    ev = _as_eval(bf, prob, mu)
    g = grad_fa(ev)[np.arange(ev.bf.num_subarrays), ev.bf.chain_of]
    x = np.exp(1j * ev.bf.analog_phases)
    return 2.0 * np.real(1j * x * g.conj())


def pack_digital(fd: np.ndarray) -> np.ndarray:
    """x = [vec(Re F_D); vec(Im F_D)] with column-major vec."""
    return np.concatenate([fd.real.ravel(order="F"), fd.imag.ravel(order="F")])


def unpack_digital(x: np.ndarray, m: int) -> np.ndarray:
    n = m * m
    return (x[:n] + 1j * x[n:]).reshape((m, m), order="F")


def real_gradient(wirtinger: np.ndarray) -> np.ndarray:
    """Real-coordinate gradient 2 [Re; Im] of a conjugate Wirtinger gradient."""
    return 2.0 * pack_digital(wirtinger)


def finite_difference_check(f: Callable[[np.ndarray], float], point: np.ndarray,
                            analytic: np.ndarray, step: float = 1e-6) -> float:
    """Max over coordinates of |analytic - fd| / (1 + |fd|) using central
    differences with step ``step * (1 + |x_i|)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=float).copy()
    fd = np.empty_like(x)
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xi = x[i]
        x[i] = xi + h
        fp = f(x)
        x[i] = xi - h
        fm = f(x)
        x[i] = xi
        fd[i] = (fp - fm) / (2 * h)
    return float(np.max(np.abs(np.asarray(analytic) - fd) / (1.0 + np.abs(fd))))


def check_all(bf: TriHybridBeamformer, prob: Problem, mu: float,
              step: float = 1e-6) -> dict[str, float]:
    """FD errors of the three analytic gradients at ``bf``."""
    M = bf.num_users
    ev = Evaluation(bf, prob, mu)

    def f_digital(x):
        return Evaluation(bf.replace(digital=unpack_digital(x, M)), prob, mu).objective

    def f_phase(x):
        return Evaluation(bf.replace(analog_phases=x), prob, mu).objective

    def f_amp(x):
        return Evaluation(bf.replace(rhs_amplitudes=x.reshape(bf.rhs_amplitudes.shape)),
                          prob, mu).objective

    return {
        "digital": finite_difference_check(
            f_digital, pack_digital(bf.digital), real_gradient(grad_fd(ev)), step),
        "analog": finite_difference_check(
            f_phase, np.array(bf.analog_phases), grad_phases(ev), step),
        "amplitude": finite_difference_check(
            f_amp, np.array(bf.rhs_amplitudes).ravel(), grad_fe_amp(ev).ravel(), step),
    }
