"""Sampling of jump paths and closed-loop trajectories."""

from .integrator import Trajectory, build_grid, integrate_closed_loop
from .paths import (JumpPath, decode_augmented, joint_path, rng_streams, sample_ctmc_path,
                    sample_joint_path_augmented, sample_observation_path)
from .signals import DelaySignal, DisturbanceSignal, make_delay_signal, make_disturbance

__all__ = [
    "DelaySignal", "DisturbanceSignal", "JumpPath", "Trajectory", "build_grid", "decode_augmented",
    "integrate_closed_loop", "joint_path", "make_delay_signal", "make_disturbance", "rng_streams",
    "sample_ctmc_path", "sample_joint_path_augmented", "sample_observation_path",
]
