"""Validation metrics for recovered kernels and trajectories.

Covers the relative coefficient reconstruction error, the force-mismatch
error functional (trajectory-weighted L2 distance between candidate and
reference interaction forces), the 1D quadratic Wasserstein distance by
quantile inversion, and a stability sweep summary keyed by noise level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .grids import DensityTrajectory, Grid1D, cell_volume
from .models import BasisSet, RadialKernel


def reconstruction_error(c_true: np.ndarray, c_hat: np.ndarray) -> float:
    """Relative coefficient error ||c_true - c_hat|| / ||c_true||.

    Degenerates to the absolute error when the truth is the zero vector.
    """
    c = np.asarray(c_true, dtype=float)
    d = c - np.asarray(c_hat, dtype=float)
    n = np.linalg.norm(c)
    return float(np.linalg.norm(d) / n) if n > 0 else float(np.linalg.norm(d))


def _force_tables(kernel: RadialKernel, grid) -> tuple[np.ndarray, ...]:
    """grad W sampled on the offset lattice (component tables in 2D)."""
    if isinstance(grid, Grid1D):
        off = np.arange(-(grid.n_nodes - 1), grid.n_nodes) * grid.dx
        tab = kernel.kernel(np.abs(off)) * np.sign(off)
        tab[off == 0.0] = 0.0
        return (tab,)
    ox = np.arange(-(grid.n_nodes[0] - 1), grid.n_nodes[0]) * grid.dx
    oy = np.arange(-(grid.n_nodes[1] - 1), grid.n_nodes[1]) * grid.dy
    rr = np.hypot(ox[:, None], oy[None, :])
    s = kernel.slope(rr)
    return (s * ox[:, None], s * oy[None, :])


def error_functional(traj: DensityTrajectory, candidate: RadialKernel,
                     reference: RadialKernel) -> float:
    """Trajectory-weighted force mismatch between two interaction kernels.

    (1/T) sum_{l,m} |grad What * rho - grad W * rho|^2 rho dV dt over the
    slices l = 1..L.  Adding a constant to either potential changes nothing
    since only gradients enter.
    """
    from .assembly import _conv_full_1d, _conv_full_2d, _used_range

    g = traj.grid
    lo, hi = _used_range(traj)
    rho = traj.values[lo: hi + 1]
    t_eff = (hi - lo + 1) * g.dt
    w_quad = cell_volume(g) * g.dt / t_eff
    cand = _force_tables(candidate, g)
    ref = _force_tables(reference, g)
    if isinstance(g, Grid1D):
        diff = _conv_full_1d(rho, cand[0] - ref[0], g.dx)
        sq = diff * diff
    else:
        w = cell_volume(g)
        dx_ = _conv_full_2d(rho, cand[0] - ref[0], w)
        dy_ = _conv_full_2d(rho, cand[1] - ref[1], w)
        sq = dx_ * dx_ + dy_ * dy_
    return float(np.sum(sq * rho) * w_quad)


def dictionary_error_functional(traj: DensityTrajectory, basis: BasisSet,
                                c: np.ndarray, reference: RadialKernel) -> float:
    """error_functional for a candidate synthesized from dictionary weights."""
    from .models import kernel_from_coefficients

    return error_functional(traj, kernel_from_coefficients(basis, c), reference)


def wasserstein2_1d(xs: np.ndarray, p: np.ndarray, q: np.ndarray,
                    n_quantiles: int = 4096) -> float:
    """Quadratic Wasserstein distance between two densities on a shared 1D grid.

    Both inputs are normalized to unit mass after a consistency check that
    their masses agree to 1e-8 relative; negative entries are rejected.
    Distance is computed by inverting the two CDFs on a shared quantile grid
    (midpoint levels, piecewise-linear inverse).
    """
    xs = np.asarray(xs, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if xs.ndim != 1 or p.shape != xs.shape or q.shape != xs.shape:
        raise InvalidParameterError("xs, p, q must be equal-length 1D arrays")
    if (p < 0).any() or (q < 0).any():
        raise InvalidInputError("densities must be nonnegative")
    dx = np.diff(xs)
    if dx.size == 0 or (dx <= 0).any():
        raise InvalidParameterError("xs must be strictly increasing")
    wp = _cell_masses(p, dx)
    wq = _cell_masses(q, dx)
    mp, mq = wp.sum(), wq.sum()
    if mp <= 0 or mq <= 0:
        raise InvalidInputError("densities must have positive mass")
    if abs(mp - mq) > 1e-8 * max(mp, mq):
        raise InvalidInputError(
            f"mass mismatch {mp:.3e} vs {mq:.3e} exceeds 1e-8 relative")
    levels = (np.arange(n_quantiles) + 0.5) / n_quantiles
    qp = _quantiles(xs, wp / mp, levels)
    qq = _quantiles(xs, wq / mq, levels)
    return float(np.sqrt(np.mean((qp - qq) ** 2)))


def _cell_masses(density: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Trapezoid mass per interval between consecutive nodes."""
    return 0.5 * (density[:-1] + density[1:]) * dx


def _quantiles(xs: np.ndarray, w: np.ndarray, levels: np.ndarray) -> np.ndarray:
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    cdf /= cdf[-1]
    # collapse flat CDF stretches so interp picks the left edge of each jump
    return np.interp(levels, cdf, xs)


@dataclass(frozen=True)
class StabilityProbe:
    """Outcome of one perturbed-kernel forward run against the reference run."""

    label: str
    e_infty: float
    d2_sq: np.ndarray
    initial_d2_sq: float
    extras: dict = field(default_factory=dict)

    @property
    def d2_sq_sup(self) -> float:
        return float(np.max(self.d2_sq))


def stability_sweep(model, rho0: np.ndarray, config,
                    perturbations: list[tuple[str, RadialKernel]],
                    n_quantiles: int = 4096) -> list[StabilityProbe]:
    """Forward-run each perturbed kernel and compare against the true run.

    Both runs start from the same initial state; each probe reports the
    force-mismatch functional of the perturbed kernel on the true trajectory
    and the squared quantile Wasserstein distance per stored snapshot.
    1D only (the distance is quantile-based).
    """
    from .fv import solve

    base = solve(model, rho0, config)
    if not isinstance(base.grid, Grid1D):
        raise InvalidParameterError("stability sweeps are 1D only")
    xs = base.grid.xs
    probes = []
    for label, what in perturbations:
        alt = solve(model.with_interaction(what), rho0, config)
        d2 = np.array([
            wasserstein2_1d(xs, base.values[l], alt.values[l],
                            n_quantiles=n_quantiles) ** 2
            for l in range(base.values.shape[0])
        ])
        probes.append(StabilityProbe(
            label=label,
            e_infty=error_functional(base, what, model.interaction),
            d2_sq=d2,
            initial_d2_sq=float(d2[0])))
    return probes


@dataclass(frozen=True)
class NoiseTrial:
    """One noise level / seed outcome inside a robustness sweep."""

    noise_percent: float
    seed: int
    support: tuple[int, ...]
    recon_error: float
    extras: dict = field(default_factory=dict)


def summarize_noise_sweep(trials: list[NoiseTrial]) -> dict:
    """Per-noise-level mean/std errors and modal-support hit rates."""
    out: dict = {}
    by_level: dict[float, list[NoiseTrial]] = {}
    for t in trials:
        by_level.setdefault(t.noise_percent, []).append(t)
    for level, group in sorted(by_level.items()):
        errs = np.array([g.recon_error for g in group])
        supports = [g.support for g in group]
        ref = max(set(supports), key=supports.count)
        out[level] = {
            "n": len(group),
            "recon_error_mean": float(errs.mean()),
            "recon_error_std": float(errs.std()),
            "recon_error_max": float(errs.max()),
            "modal_support": list(ref),
            "modal_support_rate": supports.count(ref) / len(group),
        }
    return out


def convergence_order(hs: np.ndarray, errs: np.ndarray) -> float:
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if hs.shape != errs.shape or hs.size < 2:
        raise InvalidParameterError("need at least two (h, err) pairs")
    if (hs <= 0).any() or (errs <= 0).any():
        raise InvalidInputError("h and err must be positive for a log fit")
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(slope)
