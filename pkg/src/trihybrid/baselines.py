"""Comparison schemes run through the same optimiser.

* ``TriHybrid``: all three layers optimised.
* ``TriHybrid1Bit``: tri-hybrid, then binary amplitudes and a short
  refinement of the digital and analog layers.
* ``RhsHybrid``: no analog phase control (phases frozen at zero).
* ``PaHybrid``: conventional partially-connected phased array with one
  phase shifter per element and no EM layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import quantize_1bit_problem
from .array import planar_response
from .metrics import Evaluation, Problem
from .model import (OptimizationResult, OptimizerParams, RangeError, Scenario, SystemConfig,
                    TriHybridBeamformer, validate)
from .optimizer import initial_beamformer, penalty_problem, refine_fixed_penalty, solve

KINDS = ("TriHybrid", "TriHybrid1Bit", "RhsHybrid", "PaHybrid")


class PartitionError(ValueError):
    """The phased-array grid cannot be split evenly across the RF chains."""


@dataclass(frozen=True)
class Scheme:
    """A comparison scheme; ``grid`` (rows, cols) is used by ``PaHybrid`` only."""

    kind: str
    grid: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}; expected one of {KINDS}")
        if self.kind == "PaHybrid":
            if self.grid is None:
                raise ValueError("PaHybrid needs a grid (rows, cols)")
            rows, cols = self.grid
            if rows < 1 or cols < 1:
                raise RangeError("grid sizes must be positive")
            object.__setattr__(self, "grid", (int(rows), int(cols)))

    @property
    def label(self) -> str:
        if self.kind == "PaHybrid":
            return f"PaHybrid{self.grid[0]}x{self.grid[1]}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        """``"RhsHybrid"`` or ``"PaHybrid:14x14"``."""
        kind, _, rest = text.partition(":")
        if kind == "PaHybrid":
            try:
                rows, cols = (int(v) for v in rest.lower().split("x"))
            except ValueError as exc:
                raise ValueError(f"PaHybrid grid must look like 14x14, got {rest!r}") from exc
            return cls(kind, (rows, cols))
        if rest:
            raise ValueError(f"{kind} takes no parameters")
        return cls(kind)


@dataclass(frozen=True)
class Variant:
    """A configured optimiser: ``run(scn, cfg, params, seed)`` -> result."""

    scheme: Scheme
    runner: Callable[..., OptimizationResult]
    problem_builder: Callable[[Scenario, SystemConfig], Problem]

    def run(self, scn: Scenario, cfg: SystemConfig, params: OptimizerParams | None = None,
            seed: int | None = None) -> OptimizationResult:
        validate(cfg, scn)
        params = params or OptimizerParams()
        rng = np.random.default_rng(scn.seed if seed is None else seed)
        return self.runner(scn, cfg, params, rng)

    def problem(self, scn: Scenario, cfg: SystemConfig) -> Problem:
        return self.problem_builder(scn, cfg)


def _tri_runner(scn, cfg, params, rng):
    return solve(Problem.build(scn, cfg), params, initial_beamformer(cfg, rng))


def build_tri_hybrid(cfg: SystemConfig | None = None) -> Variant:
    return Variant(Scheme("TriHybrid"), _tri_runner, Problem.build)


def build_rhs_hybrid(cfg: SystemConfig | None = None) -> Variant:
    """Tri-hybrid pipeline with every analog phase frozen at zero."""

    def runner(scn, cfg, params, rng):
        init = initial_beamformer(cfg, rng)
        init = init.replace(analog_phases=np.zeros(cfg.num_subarrays))
        init = init.replace(digital=init.digital * np.sqrt(cfg.power_budget / init.transmit_power()))
        return solve(Problem.build(scn, cfg), params, init, optimize_analog=False)

    return Variant(Scheme("RhsHybrid"), runner, Problem.build)


def build_1bit(cfg: SystemConfig | None = None, refine_iterations: int = 5) -> Variant:
    """Tri-hybrid, quantise amplitudes to {0, 1}, then refine F_D and F_A.

    The refinement keeps the final penalty coefficient of the continuous run
    fixed, so it cannot raise the objective reached right after quantising.
    """

    def runner(scn, cfg, params, rng):
        prob = Problem.build(scn, cfg)
        cont = solve(prob, params, initial_beamformer(cfg, rng))
        mu = cont.final.mu
        q = quantize_1bit_problem(cont.beamformer, penalty_problem(prob, params), mu)
        ref = refine_fixed_penalty(prob, params, q, mu, refine_iterations)
        return OptimizationResult(ref.beamformer, cont.trace + ref.trace,
                                  cont.converged and ref.converged,
                                  cont.iterations + ref.iterations)

    return Variant(Scheme("TriHybrid1Bit"), runner, Problem.build)


# -- phased array -------------------------------------------------------------

def pa_steering(directions, rows: int, cols: int, cfg: SystemConfig) -> np.ndarray:
    """Unit-norm steering of a rows x cols half-wavelength grid, shape (P, rows*cols, 1).

    Element order is column-major (column index major), so contiguous index
    blocks are column blocks of the grid.
    """
    lam = cfg.wavelength
    th = np.array([d.elevation for d in directions], dtype=float)
    ph = np.array([d.azimuth for d in directions], dtype=float)
    a = planar_response(th, ph, cols, rows, lam / 2, lam / 2, lam)
    return a.reshape(len(directions), rows * cols, 1)


def pa_problem(scn: Scenario, cfg: SystemConfig, rows: int, cols: int) -> Problem:
    """Same users, targets and path draws, re-synthesised for the PA geometry."""
    if scn.paths is None:
        raise ValueError("PaHybrid needs the scenario's path draws to rebuild channels")
    k = rows * cols
    if k % cfg.num_users:
        raise PartitionError(f"{rows}x{cols} = {k} elements do not split over "
                             f"{cfg.num_users} RF chains")
    chans = []
    for paths in scn.paths:
        a = pa_steering(paths.directions, rows, cols, cfg)[..., 0]
        chans.append(np.sqrt(k / len(paths.directions)) * (np.asarray(paths.gains) @ a))
    return Problem(
        steering=pa_steering(scn.sense_dirs, rows, cols, cfg),
        channels=np.stack(chans)[..., None],
        desired=np.asarray(scn.desired_gains, dtype=float),
        noise_power=cfg.noise_power,
        power_budget=cfg.power_budget,
        rate_threshold=cfg.rate_threshold,
        ps_per_chain=k // cfg.num_users,
    )


def pa_beamformer(digital: np.ndarray, phases: np.ndarray) -> TriHybridBeamformer:
    """Phased-array beamformer in tri-hybrid form: one unit element per shifter."""
    k = len(phases)
    ones = np.ones((k, 1))
    return TriHybridBeamformer(digital, phases, ones, ones.astype(complex))


def build_pa_hybrid(grid: tuple[int, int], cfg: SystemConfig) -> Variant:
    """Partially-connected phased array with ``rows*cols/M`` shifters per chain."""
    rows, cols = grid
    k = rows * cols
    if k % cfg.num_users:
        raise PartitionError(f"{rows}x{cols} = {k} elements do not split over "
                             f"{cfg.num_users} RF chains")
    scheme = Scheme("PaHybrid", (rows, cols))

    def builder(scn, cfg):
        return pa_problem(scn, cfg, rows, cols)

    def runner(scn, cfg, params, rng):
        M = cfg.num_users
        fd = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2)
        init = pa_beamformer(fd, rng.uniform(0.0, 2 * np.pi, k))
        init = init.replace(digital=fd * np.sqrt(cfg.power_budget / init.transmit_power()))
        return solve(builder(scn, cfg), params, init, optimize_amplitudes=False)

    return Variant(scheme, runner, builder)


def build(scheme: Scheme | str, cfg: SystemConfig) -> Variant:
    if isinstance(scheme, str):
        scheme = Scheme.parse(scheme)
    if scheme.kind == "TriHybrid":
        return build_tri_hybrid(cfg)
    if scheme.kind == "TriHybrid1Bit":
        return build_1bit(cfg)
    if scheme.kind == "RhsHybrid":
        return build_rhs_hybrid(cfg)
    return build_pa_hybrid(scheme.grid, cfg)


def final_metrics(variant: Variant, result: OptimizationResult, scn: Scenario,
                  cfg: SystemConfig) -> dict:
    """Sensing error, gains and rates of a result against the true R_th."""
    ev = Evaluation(result.beamformer, variant.problem(scn, cfg), result.final.mu)
    return {
        "sensing_error": ev.sensing_error,
        "gains": ev.gains.tolist(),
        "rates": ev.rates.tolist(),
        "min_rate": ev.min_rate,
        "mu": result.final.mu,
    }
