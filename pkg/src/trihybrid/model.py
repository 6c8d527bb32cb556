"""Domain types shared by the whole package.

Everything here is an immutable value object.  Complex arrays are stored as
read-only numpy arrays; ``to_dict``/``from_dict`` give a JSON-friendly form
where complex numbers become ``[re, im]`` pairs and angles are in degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class DimensionMismatch(ValueError):
    """An array does not have the length implied by the configuration."""


class RangeError(ValueError):
    """A scalar parameter lies outside its admissible interval."""


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def complex_to_list(arr: np.ndarray) -> list:
    """Nested ``[re, im]`` lists for JSON output."""
    arr = np.asarray(arr)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_list(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True)
class SystemConfig:
    """Physical and dimensional parameters of the tri-hybrid transmitter.

    ``spacing_x``, ``spacing_y`` and ``surface_wavenumber`` default to
    lambda/2, lambda/4 and 2*sqrt(3)*pi/lambda when left as ``None``.
    """

    carrier_freq: float = 30e9
    num_users: int = 4
    ps_per_chain: int = 4
    elements_per_rhs: int = 48
    num_sense_dirs: int = 5
    spacing_x: float | None = None
    spacing_y: float | None = None
    surface_wavenumber: float | None = None
    radiation_efficiency: float = 0.8
    radiation_prob: float = 0.5
    noise_power: float = 0.1
    power_budget: float = 1.0
    rate_threshold: float = 4.0

    def __post_init__(self):
        lam = self.wavelength
        if self.spacing_x is None:
            object.__setattr__(self, "spacing_x", lam / 2)
        if self.spacing_y is None:
            object.__setattr__(self, "spacing_y", lam / 4)
        if self.surface_wavenumber is None:
            object.__setattr__(self, "surface_wavenumber", 2 * math.sqrt(3) * math.pi / lam)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def num_subarrays(self) -> int:
        """Number of phase shifters, N*M."""
        return self.ps_per_chain * self.num_users

    @property
    def num_elements(self) -> int:
        """Total RHS element count N*M*L."""
        return self.num_subarrays * self.elements_per_rhs

    @property
    def snr_db(self) -> float:
        return 10 * math.log10(self.power_budget / self.noise_power)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return replace(self, noise_power=self.power_budget / 10 ** (snr_db / 10))

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        for name in ("num_users", "ps_per_chain", "elements_per_rhs", "num_sense_dirs"):
            if int(getattr(self, name)) < 1:
                raise RangeError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("carrier_freq", "spacing_x", "spacing_y", "noise_power", "power_budget"):
            if not getattr(self, name) > 0:
                raise RangeError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.rate_threshold < 0:
            raise RangeError(f"rate_threshold must be >= 0, got {self.rate_threshold}")
        for name in ("radiation_efficiency", "radiation_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise RangeError(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        return cls(**data)


@dataclass(frozen=True)
class Direction:
    """Elevation in [0, pi/2] and azimuth in [0, 2*pi), both in radians."""

    elevation: float
    azimuth: float

    @classmethod
    def from_degrees(cls, elevation_deg: float, azimuth_deg: float) -> "Direction":
        return cls(math.radians(elevation_deg), math.radians(azimuth_deg))

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.elevation), math.degrees(self.azimuth)

    def validate(self) -> None:
        if not 0.0 <= self.elevation <= math.pi / 2 + 1e-12:
            raise RangeError(f"elevation {self.elevation} rad outside [0, pi/2]")
        if not 0.0 <= self.azimuth < 2 * math.pi:
            raise RangeError(f"azimuth {self.azimuth} rad outside [0, 2pi)")


@dataclass(frozen=True)
class PathSet:
    """Multipath parameters of one user channel (kept so that the same
    propagation can be re-synthesised on another array geometry)."""

    gains: np.ndarray
    directions: tuple[Direction, ...]

    def __post_init__(self):
        object.__setattr__(self, "gains", _frozen(self.gains, complex))
        object.__setattr__(self, "directions", tuple(self.directions))

    def to_dict(self) -> dict:
        return {
            "gains": complex_to_list(self.gains),
            "directions_deg": [list(d.degrees()) for d in self.directions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PathSet":
        return cls(
            complex_from_list(data["gains"]),
            tuple(Direction.from_degrees(*d) for d in data["directions_deg"]),
        )


@dataclass(frozen=True)
class Scenario:
    """User channels, sensing directions and desired gains.

    ``channels`` has shape (M, N*M*L); a zero entry in ``desired_gains`` marks
    a suppression direction.
    """

    channels: np.ndarray
    sense_dirs: tuple[Direction, ...]
    desired_gains: np.ndarray
    seed: int = 0
    paths: tuple[PathSet, ...] | None = None
    user_dirs: tuple[Direction, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", _frozen(np.atleast_2d(self.channels), complex))
        object.__setattr__(self, "sense_dirs", tuple(self.sense_dirs))
        object.__setattr__(self, "desired_gains", _frozen(self.desired_gains, float))
        if self.paths is not None:
            object.__setattr__(self, "paths", tuple(self.paths))
        if self.user_dirs is not None:
            object.__setattr__(self, "user_dirs", tuple(self.user_dirs))

    def with_desired_gains(self, b: Sequence[float]) -> "Scenario":
        return replace(self, desired_gains=np.asarray(b, dtype=float))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "channels": complex_to_list(self.channels),
            "sense_dirs_deg": [list(d.degrees()) for d in self.sense_dirs],
            "desired_gains": self.desired_gains.tolist(),
            "seed": int(self.seed),
        }
        if self.paths is not None:
            out["paths"] = [p.to_dict() for p in self.paths]
        if self.user_dirs is not None:
            out["user_dirs_deg"] = [list(d.degrees()) for d in self.user_dirs]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        paths = data.get("paths")
        users = data.get("user_dirs_deg")
        return cls(
            channels=complex_from_list(data["channels"]),
            sense_dirs=tuple(Direction.from_degrees(*d) for d in data["sense_dirs_deg"]),
            desired_gains=np.asarray(data["desired_gains"], dtype=float),
            seed=int(data.get("seed", 0)),
            paths=None if paths is None else tuple(PathSet.from_dict(p) for p in paths),
            user_dirs=None if users is None else tuple(Direction.from_degrees(*d) for d in users),
        )


@dataclass(frozen=True)
class TriHybridBeamformer:
    """Digital precoder, analog phases and RHS amplitudes.

    The analog layer is stored as N*M phases; subarray ``i`` belongs to RF
    chain ``i // N``.  ``rhs_phase_coeffs`` holds the fixed element
    coefficients c_n (rows) and never changes during optimisation.
    """

    digital: np.ndarray            # (M, M) complex
    analog_phases: np.ndarray      # (N*M,) real
    rhs_amplitudes: np.ndarray     # (N*M, L) real in [0, 1]
    rhs_phase_coeffs: np.ndarray   # (N*M, L) complex

    def __post_init__(self):
        object.__setattr__(self, "digital", _frozen(self.digital, complex))
        phases = np.mod(np.asarray(self.analog_phases, dtype=float), 2 * np.pi)
        # mod of a tiny negative angle rounds up to exactly 2*pi
        phases = np.where(phases >= 2 * np.pi, 0.0, phases)
        object.__setattr__(self, "analog_phases", _frozen(phases, float))
        object.__setattr__(self, "rhs_amplitudes", _frozen(self.rhs_amplitudes, float))
        object.__setattr__(self, "rhs_phase_coeffs", _frozen(self.rhs_phase_coeffs, complex))

    @property
    def num_users(self) -> int:
        return self.digital.shape[0]

    @property
    def num_subarrays(self) -> int:
        return self.analog_phases.shape[0]

    @property
    def ps_per_chain(self) -> int:
        return self.num_subarrays // self.num_users

    @property
    def elements_per_rhs(self) -> int:
        return self.rhs_amplitudes.shape[1]

    @property
    def chain_of(self) -> np.ndarray:
        return np.arange(self.num_subarrays) // self.ps_per_chain

    @property
    def block_mask(self) -> np.ndarray:
        """Boolean (N*M, M) support of the block-diagonal analog matrix."""
        return self.chain_of[:, None] == np.arange(self.num_users)[None, :]

    @property
    def analog_matrix(self) -> np.ndarray:
        """Dense F_A with unit-modulus entries on the block support."""
        return np.exp(1j * self.analog_phases)[:, None] * self.block_mask

    @property
    def element_weights(self) -> np.ndarray:
        """Amplitude times coefficient for every element, shape (N*M, L)."""
        return self.rhs_amplitudes * self.rhs_phase_coeffs

    @property
    def rhs_matrix(self) -> np.ndarray:
        """Dense F_E of shape (N*M*L, N*M) with L x 1 diagonal blocks."""
        nm, L = self.rhs_amplitudes.shape
        out = np.zeros((nm * L, nm), dtype=complex)
        w = self.element_weights
        for i in range(nm):
            out[i * L:(i + 1) * L, i] = w[i]
        return out

    def transmit_power(self) -> float:
        """||F_A F_D||_F^2."""
        return float(np.sum(np.abs(self.analog_matrix @ self.digital) ** 2))

    def replace(self, **changes) -> "TriHybridBeamformer":
        return replace(self, **changes)

    def validate(self) -> None:
        M = self.digital.shape[0]
        if self.digital.shape != (M, M):
            raise DimensionMismatch(f"digital precoder must be square, got {self.digital.shape}")
        if self.num_subarrays % M:
            raise DimensionMismatch("number of analog phases is not a multiple of M")
        if self.rhs_amplitudes.shape != self.rhs_phase_coeffs.shape:
            raise DimensionMismatch("amplitude and coefficient matrices differ in shape")
        if self.rhs_amplitudes.shape[0] != self.num_subarrays:
            raise DimensionMismatch("amplitude rows must equal the number of phase shifters")
        a = self.rhs_amplitudes
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise RangeError("RHS amplitudes must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "digital": complex_to_list(self.digital),
            "analog_phases": self.analog_phases.tolist(),
            "rhs_amplitudes": self.rhs_amplitudes.tolist(),
            "rhs_phase_coeffs": complex_to_list(self.rhs_phase_coeffs),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TriHybridBeamformer":
        return cls(
            digital=complex_from_list(data["digital"]),
            analog_phases=np.asarray(data["analog_phases"], dtype=float),
            rhs_amplitudes=np.asarray(data["rhs_amplitudes"], dtype=float),
            rhs_phase_coeffs=complex_from_list(data["rhs_phase_coeffs"]),
        )


@dataclass(frozen=True)
class PenaltyState:
    mu: float = 1.0
    rho: float = 1.5
    mu_min: float = 1.0
    mu_max: float = 1000.0

    def validate(self) -> None:
        if not self.rho > 1:
            raise RangeError(f"rho must exceed 1, got {self.rho}")
        if not self.mu_min <= self.mu <= self.mu_max:
            raise RangeError(f"mu={self.mu} outside [{self.mu_min}, {self.mu_max}]")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "PenaltyState":
        return cls(**data)


@dataclass(frozen=True)
class OptimizerParams:
    """Loop controls of the alternating optimisation."""

    max_outer: int = 30
    sqp_inner: int = 10
    joint_inner: int = 100
    tau: float = 5e-3
    rate_margin: float = 0.1
    penalty: PenaltyState = field(default_factory=PenaltyState)
    armijo_c1: float = 1e-4
    backtrack_ratio: float = 0.5
    max_backtracks: int = 30
    step_init_fe: float = 1e-2
    step_init_fa: float = 1e-2
    step_min: float = 1e-8
    step_max: float = 1.0

    def validate(self) -> None:
        for name in ("max_outer", "sqp_inner", "joint_inner", "max_backtracks"):
            if int(getattr(self, name)) < 1:
                raise RangeError(f"{name} must be >= 1")
        if self.rate_margin < 0:
            raise RangeError("rate_margin must be >= 0")
        if not self.tau > 0:
            raise RangeError("tau must be > 0")
        if not 0 < self.armijo_c1 < 1:
            raise RangeError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_ratio < 1:
            raise RangeError("backtrack_ratio must lie in (0, 1)")
        if not 0 < self.step_min <= self.step_max:
            raise RangeError("need 0 < step_min <= step_max")
        self.penalty.validate()

    def replace(self, **changes) -> "OptimizerParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["penalty"] = self.penalty.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerParams":
        data = dict(data)
        if "penalty" in data:
            data["penalty"] = PenaltyState.from_dict(data["penalty"])
        return cls(**data)


@dataclass(frozen=True)
class TraceRecord:
    sensing_error: float
    min_rate: float
    mu: float
    objective: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TraceRecord":
        return cls(**data)


@dataclass(frozen=True)
class OptimizationResult:
    beamformer: TriHybridBeamformer
    trace: tuple[TraceRecord, ...]
    converged: bool
    iterations: int

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(self.trace))
        if len(self.trace) != self.iterations:
            raise DimensionMismatch("trace length must equal the iteration count")

    @property
    def final(self) -> TraceRecord:
        return self.trace[-1]

    def to_dict(self) -> dict:
        return {
            "beamformer": self.beamformer.to_dict(),
            "trace": [r.to_dict() for r in self.trace],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizationResult":
        return cls(
            beamformer=TriHybridBeamformer.from_dict(data["beamformer"]),
            trace=tuple(TraceRecord.from_dict(r) for r in data["trace"]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
        )


def validate(cfg: SystemConfig, scn: Scenario) -> None:
    """Raise if the configuration or the scenario breaks an invariant."""
    cfg.validate()
    nml = cfg.num_elements
    if scn.channels.shape[0] != cfg.num_users:
        raise DimensionMismatch(
            f"expected {cfg.num_users} user channels, got {scn.channels.shape[0]}")
    if scn.channels.shape[1] != nml:
        raise DimensionMismatch(f"channel length {scn.channels.shape[1]} != N*M*L = {nml}")
    if len(scn.sense_dirs) != cfg.num_sense_dirs:
        raise DimensionMismatch(
            f"expected {cfg.num_sense_dirs} sensing directions, got {len(scn.sense_dirs)}")
    if len(scn.sense_dirs) != len(scn.desired_gains):
        raise DimensionMismatch("one desired gain per sensing direction is required")
    for d in scn.sense_dirs:
        d.validate()
    b = scn.desired_gains
    if np.any(b < 0):
        raise RangeError("desired gains must be nonnegative")
    if not np.any(b > 0):
        raise RangeError("at least one desired gain must be positive")
