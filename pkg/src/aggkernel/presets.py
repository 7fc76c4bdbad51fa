"""Bundled experiment configurations for the worked identification problems.

An ExperimentConfig records everything a run needs: the forward model, the
solver mesh, the observation downsampling, the noise level, the candidate
dictionary, and solver plus pruning defaults.  Configs are plain data: they
serialize to nested dicts of builtin types, round-trip through
config_from_dict, and hash stably, so cached artifacts can be keyed by
content.

The named presets cover five recovery problems:

  example1         power-law diffusion (m=2) with a compactly supported
                   attraction well; box initial datum of mass 4; piecewise
                   constant dictionary on [0, 6].
  example1-linear  same data, piecewise linear dictionary (24 elements).
  example2         m=3 diffusion against a two-gaussian attraction kernel;
                   heavily downsampled in time (6 observed frames).
  example3         linear diffusion with a double-well confinement and
                   quadratic attraction; polynomial dictionary.
  example4         2D stationary-state problem with analytic data; slope
                   dictionary of monomials; used for mesh-convergence runs.
  example5         2D coarse-mesh run with a gaussian attraction kernel and
                   slope dictionary of gaussians.

example2 and example3 also ship -desk variants (coarser meshes, same physics)
sized for routine test runs; the remaining presets are already desk scale and
their -desk names are aliases.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .fv import SolverConfig
from .grids import Grid1D, Grid2D, make_grid_1d, make_grid_2d
from .models import (BasisSet, DiffusionLaw, ModelSpec, PotentialFn,
                     basis_from_dict, basis_gaussian, basis_piecewise,
                     basis_polynomial, gaussian_sum_potential, hat_attraction,
                     kernel_from_dict, quadratic_attraction, sha256_of,
                     true_coefficients)

IC_DUST = 1e-14  # initial values below this are snapped to exact zero

# N values for the example4 mesh family, dx = 4/N
EXAMPLE4_MESHES = tuple(range(22, 41, 2))


# ---------------------------------------------------------------------------
# initial conditions

def _gauss_pdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))


def _ic_box(grid: Grid1D) -> np.ndarray:
    """Cell averages of the indicator of [-2, 2]; the two straddling cells
    get the exact overlap fraction, so the discrete mass is exactly 4."""
    half = grid.dx / 2.0
    lo, hi = grid.xs - half, grid.xs + half
    overlap = np.clip(np.minimum(hi, 2.0) - np.maximum(lo, -2.0), 0.0, None)
    return overlap / grid.dx


def _ic_twin_gauss(grid: Grid1D) -> np.ndarray:
    # equal-weight mixture centered at +-1, sd 0.5 (total mass 1)
    return 0.5 * (_gauss_pdf(grid.xs, 1.0, 0.5) + _gauss_pdf(grid.xs, -1.0, 0.5))


def _ic_centered_gauss(grid: Grid1D) -> np.ndarray:
    return _gauss_pdf(grid.xs, 0.0, 0.3)


def _ic_parabola_cap(grid: Grid2D) -> np.ndarray:
    """max(sqrt(8/pi) - |x|^2, 0): the mass-4 steady profile of m=2, kappa=1
    diffusion balanced against quadratic attraction.  (A profile a - |x|^2
    is steady only when the total mass is 4; pi a^2 / 2 = 4 fixes a.)"""
    a = math.sqrt(8.0 / math.pi)
    rr = grid.xs[:, None] ** 2 + grid.ys[None, :] ** 2
    return np.clip(a - rr, 0.0, None)


def _ic_twin_bumps(grid: Grid2D) -> np.ndarray:
    # 25(exp(-|x - c|^2) + exp(-|x + c|^2)), c = (0.5, 0.5)
    xx, yy = grid.xs[:, None], grid.ys[None, :]
    return 25.0 * (np.exp(-((xx - 0.5) ** 2 + (yy - 0.5) ** 2))
                   + np.exp(-((xx + 0.5) ** 2 + (yy + 0.5) ** 2)))


_INITIAL = {
    "box": (_ic_box, 1),
    "twin-gauss": (_ic_twin_gauss, 1),
    "centered-gauss": (_ic_centered_gauss, 1),
    "parabola-cap": (_ic_parabola_cap, 2),
    "twin-bumps": (_ic_twin_bumps, 2),
}


def initial_density(tag: str, grid) -> np.ndarray:
    """Evaluate a registered initial condition on `grid`, with dust removal."""
    if tag not in _INITIAL:
        raise InvalidParameterError(f"unknown initial condition {tag!r}")
    fn, ndim = _INITIAL[tag]
    want = Grid1D if ndim == 1 else Grid2D
    if not isinstance(grid, want):
        raise InvalidParameterError(f"initial condition {tag!r} needs a {ndim}D grid")
    v = fn(grid)
    v[v < IC_DUST] = 0.0
    return v


# ---------------------------------------------------------------------------
# configuration record

_SOLVERS = ("partinv", "subspace_pursuit", "stls", "least_squares")
_SOURCES = ("solve", "stationary")


@dataclass(frozen=True)
class ExperimentConfig:
    """One self-contained identification run.

    `R` is the half-width of the region the data live in; the processing
    mesh extends to [-2R, 2R] so convolution values near the edge of the
    data region stay exact.  `downsample` gives the (space, time) factors
    between the solver mesh and the observed mesh.  `data_source` is
    'solve' for trajectories integrated from the initial condition and
    'stationary' for analytic steady data (the initial profile repeated,
    bypassing the solver).
    """

    name: str
    model: ModelSpec
    basis: BasisSet
    ic: str
    R: float
    dx: float
    dt: float
    T: float
    ndim: int = 1
    mode: str = "fixed"
    cfl_safety: float = 0.9
    downsample: tuple[int, int] = (1, 1)
    noise_percent: float = 0.0
    seed: int = 0
    sparsity: int = 2
    solver: str = "partinv"
    solver_threshold: float | None = None  # stls only; None picks a default
    prune_rel_width: float = 0.2
    prune_refine: int = 2
    prune_n_steps: int = 10
    prune_stride: int = 1
    data_source: str = "solve"
    notes: str = ""

    def __post_init__(self):
        if self.ndim not in (1, 2):
            raise InvalidParameterError("ndim must be 1 or 2")
        cx, ct = self.downsample
        if cx < 1 or ct < 1:
            raise InvalidParameterError("downsampling factors must be >= 1")
        if self.solver not in _SOLVERS:
            raise InvalidParameterError(f"unknown solver {self.solver!r}")
        if self.data_source not in _SOURCES:
            raise InvalidParameterError(f"unknown data source {self.data_source!r}")
        if self.sparsity < 1:
            raise InvalidParameterError("sparsity must be >= 1")
        if self.ic not in _INITIAL or _INITIAL[self.ic][1] != self.ndim:
            raise InvalidParameterError(f"initial condition {self.ic!r} does not "
                                        f"match ndim={self.ndim}")

    # -- derived objects ----------------------------------------------------

    def solver_grid(self):
        if self.ndim == 1:
            return make_grid_1d(self.R, self.dx, self.dt, self.T)
        return make_grid_2d(self.R, self.R, self.dx, self.dx, self.dt, self.T)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(grid=self.solver_grid(), mode=self.mode,
                            cfl_safety=self.cfl_safety)

    def initial(self) -> np.ndarray:
        return initial_density(self.ic, self.solver_grid())

    def true_c(self) -> np.ndarray | None:
        """Exact dictionary coefficients of the model's interaction kernel,
        or None when the kernel is outside the dictionary span."""
        if self.model.interaction is None:
            return None
        return true_coefficients(self.model.interaction, self.basis,
                                 use_slope=self.ndim == 2)

    def with_updates(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.to_dict(),
            "basis": self.basis.to_dict(),
            "ic": self.ic,
            "R": self.R, "dx": self.dx, "dt": self.dt, "T": self.T,
            "ndim": self.ndim,
            "mode": self.mode,
            "cfl_safety": self.cfl_safety,
            "downsample": list(self.downsample),
            "noise_percent": self.noise_percent,
            "seed": self.seed,
            "sparsity": self.sparsity,
            "solver": self.solver,
            "solver_threshold": self.solver_threshold,
            "pruning": {"rel_width": self.prune_rel_width,
                        "refine": self.prune_refine,
                        "n_steps": self.prune_n_steps,
                        "stride": self.prune_stride},
            "data_source": self.data_source,
            "notes": self.notes,
        }

    def content_hash(self) -> str:
        d = self.to_dict()
        d.pop("notes")
        return sha256_of(d)


def _model_from_dict(d: dict) -> ModelSpec:
    conf = d.get("confinement")
    inter = d.get("interaction")
    return ModelSpec(
        diffusion=DiffusionLaw(**d["diffusion"]),
        confinement=PotentialFn(conf["tag"]) if conf else None,
        interaction=kernel_from_dict(inter) if inter else None,
    )


def config_from_dict(d: dict) -> ExperimentConfig:
    p = d.get("pruning", {})
    return ExperimentConfig(
        name=d["name"],
        model=_model_from_dict(d["model"]),
        basis=basis_from_dict(d["basis"]),
        ic=d["ic"],
        R=d["R"], dx=d["dx"], dt=d["dt"], T=d["T"],
        ndim=d.get("ndim", 1),
        mode=d.get("mode", "fixed"),
        cfl_safety=d.get("cfl_safety", 0.9),
        downsample=tuple(d.get("downsample", (1, 1))),
        noise_percent=d.get("noise_percent", 0.0),
        seed=d.get("seed", 0),
        sparsity=d.get("sparsity", 2),
        solver=d.get("solver", "partinv"),
        solver_threshold=d.get("solver_threshold"),
        prune_rel_width=p.get("rel_width", 0.2),
        prune_refine=p.get("refine", 2),
        prune_n_steps=p.get("n_steps", 10),
        prune_stride=p.get("stride", 1),
        data_source=d.get("data_source", "solve"),
        notes=d.get("notes", ""),
    )


# ---------------------------------------------------------------------------
# named presets

def _example1(degree: int) -> ExperimentConfig:
    model = ModelSpec(diffusion=DiffusionLaw(kind="power", kappa=0.2, m=2.0),
                      interaction=hat_attraction(depth=5.0, reach=1.0))
    # The density aggregates into a plateau of height ~5, which drags the
    # diffusive stability limit down to dx^2 / (2 kappa m rho_max) = 2.5e-5,
    # half the snapshot spacing.  Adaptive stepping keeps the run stable while
    # snapshots still land on the dt lattice.
    # R is the data half-width; the lattice spans [-2R, 2R] = [-6, 6]
    return ExperimentConfig(
        name="example1" if degree == 0 else "example1-linear",
        model=model,
        basis=basis_piecewise(cells=12, degree=degree, domain_end=6.0),
        ic="box", R=3.0, dx=1e-2, dt=0.5e-4, T=0.5,
        mode="adaptive", cfl_safety=0.45, downsample=(6, 50),
        sparsity=2 if degree == 0 else 3,
        prune_refine=2, prune_n_steps=40, prune_stride=1,
        notes="transient two-cluster run; observed mesh (0.06, 2.5e-3)")


def _example2(desk: bool) -> ExperimentConfig:
    w = gaussian_sum_potential(
        amplitudes=[-2.0 / math.sqrt(math.pi), -2.0 / math.sqrt(2.0 * math.pi)],
        rates=[1.0, 0.5])
    model = ModelSpec(diffusion=DiffusionLaw(kind="power", kappa=0.48, m=3.0),
                      interaction=w)
    basis = basis_gaussian(weights=(0.5 * np.arange(1, 11)).tolist(),
                           form="scaled-r", scale=6.0)
    if desk:
        return ExperimentConfig(
            name="example2-desk", model=model, basis=basis,
            ic="twin-gauss", R=3.0, dx=2.5e-2, dt=4e-4, T=1.6,
            mode="fixed", downsample=(4, 400), sparsity=2,
            notes="coarse twin of example2; observed mesh (0.1, 0.16)")
    return ExperimentConfig(
        name="example2", model=model, basis=basis,
        ic="twin-gauss", R=3.0, dx=1.25e-2, dt=1e-4, T=1.5,
        mode="fixed", downsample=(5, 2500), sparsity=2,
        notes="sparse-in-time observations: 6 frames 0.25 apart")


def _example3(desk: bool) -> ExperimentConfig:
    model = ModelSpec(diffusion=DiffusionLaw(kind="linear", kappa=0.1),
                      confinement=PotentialFn("double_well"),
                      interaction=quadratic_attraction())
    basis = basis_polynomial(n=10, scale=6.0, form="kernel")
    common = dict(model=model, basis=basis, ic="centered-gauss", R=3.0,
                  dt=1e-2, T=5.0, mode="adaptive", cfl_safety=0.45,
                  sparsity=2, prune_refine=5, prune_n_steps=2, prune_stride=1,
                  noise_percent=0.5, seed=18)
    # the nominal dt=1e-2 far exceeds the CFL bound of the scheme near the
    # support edge, so snapshots land on the nominal times while the
    # integrator substeps adaptively
    if desk:
        return ExperimentConfig(
            name="example3-desk", dx=0.03, downsample=(2, 5),
            notes="coarser solver mesh, identical observed mesh (0.06, 0.05)",
            **common)
    return ExperimentConfig(
        name="example3", dx=1.2e-2, downsample=(5, 5),
        notes="double-well flocking run; observed mesh (0.06, 0.05)",
        **common)


def _example4() -> ExperimentConfig:
    model = ModelSpec(diffusion=DiffusionLaw(kind="power", kappa=1.0, m=2.0),
                      interaction=quadratic_attraction())
    # lattice spans [-2, 2]^2 with N = 4/dx cells per axis
    return ExperimentConfig(
        name="example4", model=model,
        basis=basis_polynomial(n=10, scale=2.0, form="slope"),
        ic="parabola-cap", R=1.0, dx=0.1, dt=0.01, T=0.1,
        ndim=2, mode="adaptive", cfl_safety=0.45,
        downsample=(1, 1), sparsity=1, data_source="stationary",
        notes="analytic steady data; mesh family dx = 4/N, N in "
              + repr(list(EXAMPLE4_MESHES)))


def _example5() -> ExperimentConfig:
    model = ModelSpec(diffusion=DiffusionLaw(kind="power", kappa=1.0, m=2.0),
                      interaction=gaussian_sum_potential([-3.0], [2.0]))
    # the nominal dt=1e-3 sits far above the scheme's CFL bound (the bumps
    # peak near 25, so interface speeds reach the hundreds); snapshots land
    # on the nominal times while the integrator substeps adaptively
    return ExperimentConfig(
        name="example5", model=model,
        basis=basis_gaussian(weights=list(range(1, 11)), form="slope"),
        ic="twin-bumps", R=1.05, dx=0.2, dt=1e-3, T=0.05,
        ndim=2, mode="adaptive", cfl_safety=0.45,
        downsample=(1, 1), sparsity=2,
        prune_refine=2, prune_n_steps=10,
        notes="coarse-mesh 2D run; solver and observed mesh coincide")


_BUILDERS = {
    "example1": lambda: _example1(0),
    "example1-linear": lambda: _example1(1),
    "example2": lambda: _example2(False),
    "example2-desk": lambda: _example2(True),
    "example3": lambda: _example3(False),
    "example3-desk": lambda: _example3(True),
    "example4": _example4,
    "example5": _example5,
}

# already desk scale; the alias keeps 'name-desk' valid for every preset
_ALIASES = {
    "example1-desk": "example1",
    "example1-linear-desk": "example1-linear",
    "example4-desk": "example4",
    "example5-desk": "example5",
}


def list_presets() -> list[str]:
    return sorted(_BUILDERS)


def get_preset(name: str) -> ExperimentConfig:
    key = _ALIASES.get(name, name)
    if key not in _BUILDERS:
        known = ", ".join(sorted(list(_BUILDERS) + list(_ALIASES)))
        raise InvalidParameterError(f"unknown preset {name!r} (known: {known})")
    return _BUILDERS[key]()
