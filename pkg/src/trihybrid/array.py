"""Array response, RHS element coefficients and channel synthesis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Direction, PathSet, RangeError, SystemConfig


@dataclass(frozen=True)
class ChannelParams:
    """Saleh-Valenzuela draw: ``num_paths`` paths with CN(0, 1) gains and
    directions uniform over the elevation/azimuth ranges."""

    num_paths: int = 3

    def __post_init__(self):
        if self.num_paths < 1:
            raise RangeError("num_paths must be >= 1")


def ula_response(n: int, spacing: float, wavelength: float, sine: np.ndarray) -> np.ndarray:
    """Unit-norm uniform linear response, shape ``sine.shape + (n,)``."""
    sine = np.asarray(sine, dtype=float)
    k = 2 * np.pi / wavelength
    idx = np.arange(n)
    return np.exp(1j * k * spacing * sine[..., None] * idx) / np.sqrt(n)


def planar_response(theta, phi, n_h: int, n_v: int, d_h: float, d_v: float,
                    wavelength: float) -> np.ndarray:
    """Kronecker steering ``a_h (x) a_v`` for arrays of angles.

    Returns shape ``theta.shape + (n_h, n_v)``; flattening the last two axes
    gives the Kronecker ordering (horizontal index major).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    a_h = ula_response(n_h, d_h, wavelength, st * np.cos(phi))
    a_v = ula_response(n_v, d_v, wavelength, st * np.sin(phi))
    return a_h[..., :, None] * a_v[..., None, :]


def steering_vector(direction: Direction, cfg: SystemConfig) -> np.ndarray:
    """Length N*M*L unit-norm steering vector toward ``direction``."""
    return steering_grid(direction, cfg).reshape(-1)


def steering_grid(direction: Direction, cfg: SystemConfig) -> np.ndarray:
    """Steering vector reshaped to (N*M, L): row ``i`` is subarray ``i``."""
    return planar_response(direction.elevation, direction.azimuth,
                           cfg.num_subarrays, cfg.elements_per_rhs,
                           cfg.spacing_x, cfg.spacing_y, cfg.wavelength)


def steering_stack(directions, cfg: SystemConfig) -> np.ndarray:
    """Steering grids for several directions, shape (len, N*M, L)."""
    if len(directions) == 0:
        return np.zeros((0, cfg.num_subarrays, cfg.elements_per_rhs), dtype=complex)
    th = np.array([d.elevation for d in directions])
    ph = np.array([d.azimuth for d in directions])
    return planar_response(th, ph, cfg.num_subarrays, cfg.elements_per_rhs,
                           cfg.spacing_x, cfg.spacing_y, cfg.wavelength)


def energy_coefficients(cfg: SystemConfig, num_elements: int | None = None) -> np.ndarray:
    """w_l = sqrt(eta * (1 - p_on*eta)**(l-1)) for l = 1..L."""
    L = cfg.elements_per_rhs if num_elements is None else num_elements
    eta, p_on = cfg.radiation_efficiency, cfg.radiation_prob
    return np.sqrt(eta * (1.0 - p_on * eta) ** np.arange(L))


def rhs_coefficients(n: int, cfg: SystemConfig, num_elements: int | None = None) -> np.ndarray:
    """Coefficient vector c_n of subarray ``n`` (1-based).

    The feed sits at the subarray edge, so element ``l`` is (l-1)*d_y away
    from it for every subarray.
    """
    if not 1 <= n <= cfg.num_subarrays:
        raise RangeError(f"subarray index {n} outside 1..{cfg.num_subarrays}")
    L = cfg.elements_per_rhs if num_elements is None else num_elements
    r = np.arange(L) * cfg.spacing_y
    return energy_coefficients(cfg, L) * np.exp(-1j * cfg.surface_wavenumber * r)


def rhs_coefficient_matrix(cfg: SystemConfig, num_elements: int | None = None) -> np.ndarray:
    """All c_n stacked as rows, shape (N*M, L)."""
    row = rhs_coefficients(1, cfg, num_elements)
    return np.tile(row, (cfg.num_subarrays, 1))


def draw_paths(params: ChannelParams, rng: np.random.Generator) -> PathSet:
    z = params.num_paths
    gains = (rng.standard_normal(z) + 1j * rng.standard_normal(z)) / np.sqrt(2)
    theta = rng.uniform(0.0, np.pi / 2, z)
    phi = rng.uniform(0.0, 2 * np.pi, z)
    return PathSet(gains, tuple(Direction(float(t), float(p)) for t, p in zip(theta, phi)))


def channel_from_paths(paths: PathSet, cfg: SystemConfig) -> np.ndarray:
    """h = sqrt(NML/Z) * sum_z beta_z a(theta_z, phi_z)."""
    a = steering_stack(paths.directions, cfg).reshape(len(paths.directions), -1)
    z = len(paths.directions)
    return np.sqrt(cfg.num_elements / z) * (paths.gains @ a)


def generate_channel(params: ChannelParams, cfg: SystemConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw one Saleh-Valenzuela user channel of length N*M*L."""
    return channel_from_paths(draw_paths(params, rng), cfg)
