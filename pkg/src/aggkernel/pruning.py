"""Support pruning for sparse kernel estimates.

Candidate supports are every nonempty subset of the solver's active set.
Each gets coefficients minimizing the quadratic loss restricted to that
subset, and the attained loss is its residual error (RE).  Supports whose RE
sits within a relative band of the minimum form the candidate cluster;
cluster members are ranked by trajectory extrapolation error (TEE), computed
by re-simulating the forward model with the candidate kernel and comparing
against the observed trajectory in the discrete L2 norm.  Failed
re-simulations score +inf and lose automatically.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import LinearSystem
from .errors import BudgetError, InvalidParameterError, SolverDivergenceError, PositivityError
from .fv import SolverConfig, solve
from .grids import DensityTrajectory, Grid1D, Grid2D, cell_volume
from .models import BasisSet, ModelSpec, kernel_from_coefficients
from .solvers import residual_error, restricted_ls

MAX_ENUM_SIZE = 12


@dataclass(frozen=True)
class CandidateScore:
    support: tuple[int, ...]
    c: np.ndarray
    re: float
    tee: float | None = None


@dataclass
class PruningReport:
    """Full pruning trace: every enumerated support with its RE, the cluster
    that survived the RE band, TEE values for cluster members, and the pick."""

    candidates: list[CandidateScore]
    cluster: list[CandidateScore]
    selected: CandidateScore
    re_min: float
    re_band: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc(s: CandidateScore) -> dict:
            return {"support": list(s.support), "c": s.c.tolist(),
                    "re": s.re, "tee": s.tee}
        return json.dumps({
            "candidates": [enc(s) for s in self.candidates],
            "cluster": [enc(s) for s in self.cluster],
            "selected": enc(self.selected),
            "re_min": self.re_min,
            "re_band": self.re_band,
            "meta": self.meta,
        }, indent=2)

    def to_csv(self) -> str:
        lines = ["support;re;tee;selected"]
        sel = self.selected.support
        for s in self.candidates:
            tee = "" if s.tee is None else repr(s.tee)
            mark = "1" if s.support == sel else "0"
            lines.append(f"{'+'.join(map(str, s.support))};{s.re!r};{tee};{mark}")
        return "\n".join(lines) + "\n"


def enumerate_subsets(support: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All nonempty subsets, smaller sizes first, lexicographic within a size."""
    support = tuple(sorted(set(int(i) for i in support)))
    if len(support) > MAX_ENUM_SIZE:
        raise BudgetError(
            f"support of size {len(support)} would enumerate "
            f"{2 ** len(support) - 1} subsets; limit is {MAX_ENUM_SIZE}")
    out: list[tuple[int, ...]] = []
    for size in range(1, len(support) + 1):
        out.extend(itertools.combinations(support, size))
    return out


def score_subsets(system: LinearSystem, support: tuple[int, ...],
                  rel_tol: float = 1e-12) -> list[CandidateScore]:
    """Restricted least squares plus RE for every nonempty subset of `support`.

    The per-subset fit minimizes the quadratic loss itself (restricted normal
    equations), so on a clean positive semidefinite system the RE of a
    superset never exceeds the RE of its subsets.
    """
    A, b = system.A, system.b
    scores = []
    for sub in enumerate_subsets(support):
        c = restricted_ls(A, b, sub, rel_tol)
        scores.append(CandidateScore(support=sub, c=c,
                                     re=residual_error(A, b, c)))
    return scores


def cluster_candidates(scores: list[CandidateScore],
                       rel_width: float = 0.2) -> tuple[list[CandidateScore], float, float]:
    """Keep candidates with RE within a relative band above the minimum.

    Band width is rel_width * max(|re_min|, spread) where spread is the RE
    range over all candidates, so a flat landscape still admits near-ties.
    """
    if not scores:
        raise InvalidParameterError("no candidates to cluster")
    res = np.array([s.re for s in scores])
    re_min = float(res.min())
    spread = float(res.max() - res.min())
    band = rel_width * max(abs(re_min), spread)
    cluster = [s for s in scores if s.re <= re_min + band]
    cluster.sort(key=lambda s: (s.re, len(s.support), s.support))
    return cluster, re_min, band


def _refine_grid(traj: DensityTrajectory, refine: int, n_steps: int):
    """Space-refined copy of the data mesh over the validation horizon.

    Node counts are fixed to refine*M directly so the coarse nodes stay an
    exact sublattice even when 2R/dx does not divide (the ceil in the grid
    constructor could otherwise drop the outermost node)."""
    g = traj.grid
    horizon = n_steps * g.dt
    if g.ndim == 1:
        return Grid1D(R=g.R, dx=g.dx / refine, dt=g.dt, T=horizon,
                      M=g.M * refine, L=n_steps)
    return Grid2D(Rx=g.Rx, Ry=g.Ry, dx=g.dx / refine, dy=g.dy / refine,
                  dt=g.dt, T=horizon, Mx=g.Mx * refine, My=g.My * refine,
                  L=n_steps)


def _interp_initial(traj: DensityTrajectory, fine) -> np.ndarray:
    """Clipped initial slice carried onto the refined mesh by interpolation."""
    rho0 = np.maximum(traj.values[0], 0.0)
    g = traj.grid
    if g.ndim == 1:
        return np.interp(fine.xs, g.xs, rho0)
    from scipy.interpolate import RegularGridInterpolator
    f = RegularGridInterpolator((g.xs, g.ys), rho0, bounds_error=False,
                                fill_value=0.0)
    gx, gy = np.meshgrid(fine.xs, fine.ys, indexing="ij")
    return np.maximum(f(np.stack([gx, gy], axis=-1)), 0.0)


def tee(traj: DensityTrajectory, model: ModelSpec, basis: BasisSet,
        c: np.ndarray, refine: int = 2, n_steps: int = 10, stride: int = 1,
        cfl_safety: float = 0.45, max_steps: int = 200_000) -> float:
    """Time evolution error of candidate coefficients over a short horizon.

    Re-simulates from the clipped first observed slice with the candidate
    kernel swapped into the model, on a mesh refined by `refine` in space,
    with adaptive substepping inside each observation interval.  The forward
    run covers the first `n_steps` observational steps and is compared at
    every `stride`-th stored slice in the discrete space-time L2 norm.
    Returns +inf when the forward solve fails or needs more than `max_steps`
    substeps, so broken candidates lose without running forever.
    """
    n_steps = min(int(n_steps), traj.grid.L)
    if n_steps < 1:
        raise InvalidParameterError("tee needs at least one observational step")
    kernel = kernel_from_coefficients(basis, np.asarray(c, dtype=float))
    candidate = model.with_interaction(kernel)
    fine = _refine_grid(traj, refine, n_steps)
    rho0 = _interp_initial(traj, fine)
    cfg = SolverConfig(grid=fine, mode="adaptive", cfl_safety=cfl_safety,
                       max_steps=max_steps)
    try:
        sim = solve(candidate, rho0, cfg)
    except (SolverDivergenceError, PositivityError, FloatingPointError):
        return math.inf
    coarse = _restrict_space(sim.values, refine, traj.grid.ndim)
    data = traj.values[: n_steps + 1]
    if coarse.shape != data.shape:
        raise InvalidParameterError("refined trajectory does not align with data")
    w = cell_volume(traj.grid) * traj.grid.dt
    diff = (coarse - data)[::stride]
    return float(np.sqrt(np.sum(diff * diff) * w))


def _restrict_space(values: np.ndarray, refine: int, ndim: int) -> np.ndarray:
    if refine == 1:
        return values
    if ndim == 1:
        return values[:, ::refine]
    return values[:, ::refine, ::refine]


def prune(system: LinearSystem, traj: DensityTrajectory, model: ModelSpec,
          basis: BasisSet, support: tuple[int, ...], rel_width: float = 0.2,
          refine: int = 2, n_steps: int = 10, stride: int = 1,
          rel_tol: float = 1e-12, cfl_safety: float = 0.45,
          max_steps: int = 200_000) -> PruningReport:
    """Full pruning pass: enumerate, cluster by RE, rank the cluster by TEE.

    The winner is the cluster member with the smallest TEE; TEE ties within
    1e-9 go to the sparser support, then lexicographic order.
    """
    scores = score_subsets(system, support, rel_tol)
    cluster, re_min, band = cluster_candidates(scores, rel_width)
    scored = []
    for s in cluster:
        t = tee(traj, model, basis, s.c, refine=refine, n_steps=n_steps,
                stride=stride, cfl_safety=cfl_safety, max_steps=max_steps)
        scored.append(CandidateScore(support=s.support, c=s.c, re=s.re, tee=t))
    scored.sort(key=_tee_rank)
    selected = scored[0]
    by_support = {s.support: s for s in scored}
    merged = [by_support.get(s.support, s) for s in scores]
    return PruningReport(candidates=merged, cluster=scored, selected=selected,
                         re_min=re_min, re_band=band,
                         meta={"rel_width": rel_width, "refine": refine,
                               "n_steps": n_steps, "stride": stride,
                               "enumerated": len(scores),
                               "clustered": len(scored)})


def _tee_rank(s: CandidateScore):
    """Sort key treating TEEs within 1e-9 as tied, broken by sparsity."""
    tee_val = math.inf if s.tee is None else s.tee
    quantized = 0.0 if not math.isfinite(tee_val) else round(tee_val / 1e-9)
    return (math.isinf(tee_val), quantized, len(s.support), s.support)
