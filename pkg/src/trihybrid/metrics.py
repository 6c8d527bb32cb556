"""Effective beamformers, sensing gains, user rates and the penalised objective.

The optimiser works on a :class:`Problem`, which caches the steering vectors
and channels reshaped to (N*M, L) grids so that every quantity is a sum over
elements instead of a product with a dense (N*M*L) x (N*M) matrix.

Objective convention: the sensing term that is minimised is the squared error
``sum_p (G_p - b_p)**2``; :func:`sensing_error` reports its square root.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .array import steering_stack, steering_vector
from .model import Direction, Scenario, SystemConfig, TriHybridBeamformer

LN2 = np.log(2.0)


@dataclass(frozen=True)
class Problem:
    """Numerical data of one optimisation instance.

    ``steering`` has shape (P, N*M, L) and ``channels`` (M, N*M, L); both are
    indexed by (phase shifter, element).  The same container serves the
    phased-array baseline with L = 1.
    """

    steering: np.ndarray
    channels: np.ndarray
    desired: np.ndarray
    noise_power: float
    power_budget: float
    rate_threshold: float
    ps_per_chain: int

    @classmethod
    def build(cls, scn: Scenario, cfg: SystemConfig) -> "Problem":
        nm, L = cfg.num_subarrays, cfg.elements_per_rhs
        return cls(
            steering=steering_stack(scn.sense_dirs, cfg),
            channels=np.asarray(scn.channels).reshape(cfg.num_users, nm, L),
            desired=np.asarray(scn.desired_gains, dtype=float),
            noise_power=cfg.noise_power,
            power_budget=cfg.power_budget,
            rate_threshold=cfg.rate_threshold,
            ps_per_chain=cfg.ps_per_chain,
        )

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]

    def replace(self, **changes) -> "Problem":
        from dataclasses import replace
        return replace(self, **changes)


class Evaluation:
    """All intermediate quantities of the objective at one beamformer.

    Notation: ``S = F_A F_D`` (phase-shifter outputs per user stream),
    ``y[p] = a_p^H w_sense`` and ``Y[k, j] = h_k^H G f_{D,j}``.
    """

    def __init__(self, bf: TriHybridBeamformer, prob: Problem, mu: float):
        self.bf = bf
        self.prob = prob
        self.mu = float(mu)
        self.weights = bf.element_weights                       # (NM, L)
        self.FA = bf.analog_matrix                              # (NM, M)
        self.S = self.FA @ bf.digital                           # (NM, M)
        self.s_sum = self.S.sum(axis=1)                         # (NM,)
        # per-subarray responses, summed over elements
        self.Ta = np.einsum("pil,il->pi", prob.steering.conj(), self.weights)
        self.Th = np.einsum("kil,il->ki", prob.channels.conj(), self.weights)
        self.y = self.Ta @ self.s_sum
        self.gains = np.abs(self.y) ** 2
        self.Y = self.Th @ self.S
        P2 = np.abs(self.Y) ** 2
        self.signal = np.diag(P2).copy()
        self.interference = P2.sum(axis=1) - self.signal + prob.noise_power
        self.sinr = self.signal / self.interference
        self.rates = np.log2(1.0 + self.sinr)
        self.shortfall = np.maximum(0.0, prob.rate_threshold - self.rates)

    @cached_property
    def sensing_sq(self) -> float:
        return float(np.sum((self.gains - self.prob.desired) ** 2))

    @property
    def sensing_error(self) -> float:
        return float(np.sqrt(self.sensing_sq))

    @property
    def rate_penalty(self) -> float:
        return float(np.sum(self.shortfall ** 2))

    @property
    def objective(self) -> float:
        return self.sensing_sq + self.mu * self.rate_penalty

    @property
    def min_rate(self) -> float:
        return float(self.rates.min())

    def sensing_weights(self) -> np.ndarray:
        """dF/dG_p = 2 (G_p - b_p)."""
        return 2.0 * (self.gains - self.prob.desired)

    def rate_weights(self) -> np.ndarray:
        """dF/d|Y_kj|^2 for every (user k, stream j)."""
        M = self.prob.num_users
        dR = -2.0 * self.mu * self.shortfall / (LN2 * (1.0 + self.sinr))   # dF/dSINR_k
        inv_i = 1.0 / self.interference
        w = np.outer(dR * (-self.signal * inv_i ** 2), np.ones(M))
        w[np.diag_indices(M)] = dR * inv_i
        return w


@dataclass(frozen=True)
class EffectiveBeamformer:
    """Composition ``G = F_E F_A`` kept in structured form.

    ``element_weights`` (N*M, L) and ``streams`` = F_A F_D (N*M, M) determine
    every column ``w_m = G f_{D,m}`` elementwise: ``w_m[i, l] =
    element_weights[i, l] * streams[i, m]``.
    """

    element_weights: np.ndarray
    analog: np.ndarray
    digital: np.ndarray

    @property
    def streams(self) -> np.ndarray:
        return self.analog @ self.digital

    @property
    def G(self) -> np.ndarray:
        nm, L = self.element_weights.shape
        dense = self.element_weights[:, :, None] * self.analog[:, None, :]
        return dense.reshape(nm * L, -1)

    @property
    def per_user(self) -> np.ndarray:
        """Columns w_m, shape (N*M*L, M)."""
        nm, L = self.element_weights.shape
        w = self.element_weights[:, :, None] * self.streams[:, None, :]
        return w.reshape(nm * L, -1)

    @property
    def sense_vector(self) -> np.ndarray:
        return (self.element_weights * self.streams.sum(axis=1)[:, None]).reshape(-1)


def compose(bf: TriHybridBeamformer) -> EffectiveBeamformer:
    return EffectiveBeamformer(bf.element_weights, bf.analog_matrix, bf.digital)


def sensing_gain(eb: EffectiveBeamformer, direction: Direction, cfg: SystemConfig) -> float:
    """|a(theta, phi)^H w_sense|^2."""
    a = steering_vector(direction, cfg)
    return float(np.abs(np.vdot(a, eb.sense_vector)) ** 2)


def sensing_gains(eb: EffectiveBeamformer, directions, cfg: SystemConfig) -> np.ndarray:
    a = steering_stack(directions, cfg).reshape(len(directions), -1)
    return np.abs(a.conj() @ eb.sense_vector) ** 2


def user_rates(eb: EffectiveBeamformer, scn: Scenario, cfg: SystemConfig) -> np.ndarray:
    H = np.asarray(scn.channels)
    Y = H.conj() @ eb.per_user
    p2 = np.abs(Y) ** 2
    sig = np.diag(p2)
    interf = p2.sum(axis=1) - sig
    return np.log2(1.0 + sig / (interf + cfg.noise_power))


def user_rate(eb: EffectiveBeamformer, m: int, scn: Scenario, cfg: SystemConfig) -> float:
    """Achievable rate of user ``m`` (0-based) in bit/s/Hz."""
    return float(user_rates(eb, scn, cfg)[m])


def sensing_error(gains, desired) -> float:
    """Euclidean distance between achieved and desired gain vectors."""
    g = np.asarray(gains, dtype=float)
    b = np.asarray(desired, dtype=float)
    if g.shape != b.shape:
        raise ValueError(f"length mismatch: {g.shape} vs {b.shape}")
    return float(np.linalg.norm(g - b))


def rate_penalty(rates, threshold: float) -> float:
    return float(np.sum(np.maximum(0.0, threshold - np.asarray(rates)) ** 2))


def objective(bf: TriHybridBeamformer, scn: Scenario, cfg: SystemConfig, mu: float) -> float:
    """``||g - b||^2 + mu * sum_m max(0, R_th - R_m)^2``."""
    return Evaluation(bf, Problem.build(scn, cfg), mu).objective


def to_db(x, floor: float = 1e-30):
    return 10.0 * np.log10(np.maximum(x, floor))
