"""Random scenario synthesis."""
from __future__ import annotations

import numpy as np

from .array import ChannelParams, channel_from_paths, draw_paths
from .model import Direction, PathSet, Scenario, SystemConfig


def default_desired_gains(cfg: SystemConfig, num_detect: int, num_suppress: int,
                          kappa: float = 0.5) -> np.ndarray:
    """Equal split ``kappa * P_max * N*M*L / P`` for detection targets, zero
    for suppression targets (listed last)."""
    P = num_detect + num_suppress
    level = kappa * cfg.power_budget * cfg.num_elements / P
    return np.concatenate([np.full(num_detect, level), np.zeros(num_suppress)])


def random_directions(rng: np.random.Generator, count: int) -> tuple[Direction, ...]:
    theta = rng.uniform(0.0, np.pi / 2, count)
    phi = rng.uniform(0.0, 2 * np.pi, count)
    return tuple(Direction(float(t), float(p)) for t, p in zip(theta, phi))


def random_scenario(cfg: SystemConfig, seed: int, num_suppress: int = 0,
                    desired_gains=None, kappa: float = 0.5,
                    channel: ChannelParams = ChannelParams(),
                    sense_dirs=None, user_dirs=None) -> Scenario:
    """Channels, user directions and sensing directions drawn from ``seed``.

    Streams are split per purpose (channels, sensing directions) so that
    changing one part of the template leaves the others untouched.  Given
    ``user_dirs``, every user gets one line-of-sight path of unit gain.
    """
    ss = np.random.SeedSequence(seed)
    ch_seed, dir_seed = ss.spawn(2)
    if user_dirs is None:
        user_rngs = [np.random.default_rng(s) for s in ch_seed.spawn(cfg.num_users)]
        paths = tuple(draw_paths(channel, r) for r in user_rngs)
    else:
        paths = tuple(PathSet(np.ones(1, dtype=complex), (d,)) for d in user_dirs)
    channels = np.stack([channel_from_paths(p, cfg) for p in paths])
    # strongest path stands in for the user location in plots
    users = tuple(p.directions[int(np.argmax(np.abs(p.gains)))] for p in paths)
    if sense_dirs is None:
        sense_dirs = random_directions(np.random.default_rng(dir_seed), cfg.num_sense_dirs)
    if desired_gains is None:
        desired_gains = default_desired_gains(
            cfg, cfg.num_sense_dirs - num_suppress, num_suppress, kappa)
    return Scenario(channels, sense_dirs, desired_gains, seed=seed, paths=paths, user_dirs=users)
