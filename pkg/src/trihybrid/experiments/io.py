"""Experiment specifications and reproducible file output."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Union

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .. import __version__
from ..baselines import Scheme
from ..model import Direction, OptimizerParams, SystemConfig


class ParseError(ValueError):
    """The experiment file is not valid JSON."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line, self.column = line, column


class ValidationError(ValueError):
    """The experiment file parses but breaks the schema."""

    def __init__(self, message: str, keys: tuple[str, ...] = ()):
        super().__init__(message)
        self.keys = keys


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Angle = tuple[float, float]


class SystemSpec(_Strict):
    """Overrides of :class:`SystemConfig`; defaults give the desk scenario."""

    num_users: int = Field(4, ge=1)
    ps_per_chain: int = Field(4, ge=1)
    elements_per_rhs: int = Field(24, ge=1)
    num_sense_dirs: int = Field(5, ge=1)
    carrier_freq: float = Field(30e9, gt=0)
    radiation_efficiency: float = Field(0.8, ge=0, le=1)
    radiation_prob: float = Field(0.5, ge=0, le=1)
    power_budget: float = Field(1.0, gt=0)
    rate_threshold: float = Field(4.0, ge=0)
    snr_db: float = 10.0

    def config(self) -> SystemConfig:
        data = self.model_dump()
        snr = data.pop("snr_db")
        return SystemConfig(**data).with_snr_db(snr)


class ScenarioSpec(_Strict):
    """Users and targets: ``"random"`` or explicit (elevation, azimuth) lists in degrees.

    Explicit users get a single line-of-sight path of unit gain.  Desired
    gains default to ``kappa * P_max * N*M*L / P`` for detection targets,
    computed from the base system (not the swept one), and 0 for the last
    ``num_suppress`` targets.
    """

    users: Union[Literal["random"], list[Angle]] = "random"
    targets: Union[Literal["random"], list[Angle]] = "random"
    num_suppress: int = Field(2, ge=0)
    kappa: float = Field(0.5, gt=0)
    desired_gains: list[float] | None = None
    num_paths: int = Field(3, ge=1)


class SweepSpec(_Strict):
    variable: Literal["none", "L", "R_th", "SNR"] = "none"
    values: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        if self.variable == "none":
            if self.values:
                raise ValueError("sweep values given without a sweep variable")
            return self
        if not self.values:
            raise ValueError(f"sweep over {self.variable} needs values")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"sweep values must be strictly increasing, got {self.values}")
        if self.variable == "L" and any(v != int(v) or v < 1 for v in self.values):
            raise ValueError("L sweep values must be positive integers")
        return self

    def points(self) -> list[float | None]:
        return [None] if self.variable == "none" else list(self.values)


class ExperimentSpec(_Strict):
    schemes: list[str] = Field(default_factory=lambda: ["TriHybrid"])
    seeds: list[int] = Field(default_factory=lambda: [0])
    system: SystemSpec = Field(default_factory=SystemSpec)
    scenario: ScenarioSpec = Field(default_factory=ScenarioSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    optimizer: dict[str, float] = Field(default_factory=dict)
    output_dir: str = "out"
    grid_resolution: float = Field(1.0, gt=0)

    @field_validator("schemes")
    @classmethod
    def _schemes(cls, v):
        if not v:
            raise ValueError("at least one scheme is required")
        for s in v:
            Scheme.parse(s)
        if len(set(v)) != len(v):
            raise ValueError("duplicate scheme")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        if len(set(v)) != len(v):
            raise ValueError("duplicate seed")
        return v

    @field_validator("optimizer")
    @classmethod
    def _optimizer(cls, v):
        allowed = set(OptimizerParams().to_dict()) - {"penalty"}
        unknown = sorted(set(v) - allowed)
        if unknown:
            raise ValueError(f"unknown optimizer keys: {', '.join(unknown)}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        sc, sy = self.scenario, self.system
        if sc.targets != "random" and len(sc.targets) != sy.num_sense_dirs:
            raise ValueError("targets list length must equal system.num_sense_dirs")
        if sc.users != "random" and len(sc.users) != sy.num_users:
            raise ValueError("users list length must equal system.num_users")
        if sc.num_suppress >= sy.num_sense_dirs and sc.desired_gains is None:
            raise ValueError("at least one target must be a detection target")
        if sc.desired_gains is not None and len(sc.desired_gains) != sy.num_sense_dirs:
            raise ValueError("desired_gains length must equal system.num_sense_dirs")
        if self.sweep.variable == "R_th" and any(v < 0 for v in self.sweep.values):
            raise ValueError("rate thresholds must be non-negative")
        return self

    def base_config(self) -> SystemConfig:
        return self.system.config()

    def config_at(self, value: float | None) -> SystemConfig:
        """System configuration at one sweep point."""
        cfg = self.base_config()
        var = self.sweep.variable
        if value is None or var == "none":
            return cfg
        if var == "L":
            return cfg.replace(elements_per_rhs=int(value))
        if var == "R_th":
            return cfg.replace(rate_threshold=float(value))
        return cfg.with_snr_db(float(value))

    def optimizer_params(self) -> OptimizerParams:
        base = OptimizerParams().to_dict()
        for k, v in self.optimizer.items():
            base[k] = int(v) if isinstance(base[k], int) else float(v)
        return OptimizerParams.from_dict(base)

    def target_dirs(self) -> tuple[Direction, ...] | None:
        t = self.scenario.targets
        return None if t == "random" else tuple(Direction.from_degrees(*a) for a in t)

    def user_dirs(self) -> tuple[Direction, ...] | None:
        u = self.scenario.users
        return None if u == "random" else tuple(Direction.from_degrees(*a) for a in u)


def _line_col(text: str, key: str) -> tuple[int | None, int | None]:
    idx = text.find(f'"{key}"')
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    return line, idx - (text.rfind("\n", 0, idx) + 1) + 1


def parse_experiment(text: str) -> ExperimentSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object", 1, 1)
    try:
        return ExperimentSpec.model_validate(data)
    except pydantic.ValidationError as exc:
        parts, keys = [], []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            key = str(err["loc"][-1]) if err["loc"] else ""
            keys.append(key)
            line, _ = _line_col(text, key) if key else (None, None)
            where = f" (line {line})" if line else ""
            parts.append(f"{loc or '<root>'}: {err['msg']}{where}")
        raise ValidationError("; ".join(parts), tuple(keys)) from None


def load_experiment(path: str | Path) -> ExperimentSpec:
    """Read and validate an experiment file; unknown keys are rejected."""
    return parse_experiment(Path(path).read_text())


# -- reproducible output ------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n")


VERSION = __version__
