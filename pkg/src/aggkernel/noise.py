"""Synthetic measurement noise for downsampled trajectories.

The noise level is a percentage p of the trajectory's space-time L2 size:
  sigma = (p/100) * ( sum_{l=1..L} sum_m rho(t_l, x_m)^2 * dV * dt )^(1/2)
(the l = 0 slice is excluded from the size, matching the convention that the
initial slice is given).  Perturbations are i.i.d. N(0, sigma^2) added to
every stored sample, including l = 0; nothing is clipped or denoised.

Randomness comes from the counter-based Philox generator keyed by the seed,
so draws are reproducible bit-for-bit for a fixed numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .grids import DensityTrajectory, cell_volume


@dataclass(frozen=True)
class NoiseSpec:
    percent: float
    seed: int

    def __post_init__(self):
        if self.percent < 0:
            raise InvalidParameterError("noise percent must be >= 0")


def noise_sigma(traj: DensityTrajectory, percent: float) -> float:
    if percent < 0:
        raise InvalidParameterError("noise percent must be >= 0")
    w = cell_volume(traj.grid) * traj.grid.dt
    size_sq = float(np.sum(traj.values[1:] ** 2)) * w
    return (percent / 100.0) * np.sqrt(size_sq)


def add_noise(traj: DensityTrajectory, spec: NoiseSpec) -> DensityTrajectory:
    """Perturbed copy of `traj`; a zero percent level returns the data as-is
    (still marked noisy for pipeline bookkeeping symmetry)."""
    sigma = noise_sigma(traj, spec.percent)
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    eps = rng.normal(0.0, 1.0, size=traj.values.shape) * sigma
    prov = dict(traj.provenance)
    prov["noise"] = {"percent": spec.percent, "seed": spec.seed, "sigma": sigma}
    return DensityTrajectory(grid=traj.grid, values=traj.values + eps,
                             noisy=True, provenance=prov)
