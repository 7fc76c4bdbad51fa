"""Uniform space-time meshes and density trajectories.

Conventions: spatial nodes sit at x_m = m*dx for m in [-M, M] with
M = ceil(2R/dx), so the node range covers [-2R, 2R] while the physical domain
is [-R, R] (fields are zero outside it).  Time slices sit at t_l = l*dt for
l in [0, L] with L = floor(T/dt).  Arrays are indexed [l, m+M] in 1D and
[l, mx+Mx, my+My] in 2D.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IndexAlignmentError, InvalidInputError, InvalidParameterError

_MAGIC = b"AGKT"
_SNAP = 1e-9  # relative snap when a float ratio sits on an integer


def _ratio_ceil(num: float, den: float) -> int:
    q = num / den
    r = round(q)
    if abs(q - r) <= _SNAP * max(1.0, abs(q)):
        return int(r)
    return int(np.ceil(q))


def _ratio_floor(num: float, den: float) -> int:
    q = num / den
    r = round(q)
    if abs(q - r) <= _SNAP * max(1.0, abs(q)):
        return int(r)
    return int(np.floor(q))


@dataclass(frozen=True)
class Grid1D:
    """1D space-time mesh; M and L are derived from (R, dx, dt, T)."""

    R: float
    dx: float
    dt: float
    T: float
    M: int
    L: int

    ndim = 1

    @property
    def n_nodes(self) -> int:
        return 2 * self.M + 1

    @property
    def n_times(self) -> int:
        return self.L + 1

    @property
    def xs(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1) * self.dx

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.L + 1) * self.dt

    def x(self, m: int) -> float:
        return m * self.dx

    def t(self, l: int) -> float:
        return l * self.dt

    def index_of(self, x: float) -> int:
        """Node index m with x_m = x; errors if x is off-mesh."""
        m = round(x / self.dx)
        if abs(x - m * self.dx) > _SNAP * max(1.0, abs(x)) or abs(m) > self.M:
            raise IndexAlignmentError(f"x={x} is not a mesh node")
        return int(m)

    def to_dict(self) -> dict:
        return {"kind": "grid1d", "R": self.R, "dx": self.dx, "dt": self.dt,
                "T": self.T, "M": self.M, "L": self.L}


@dataclass(frozen=True)
class Grid2D:
    """2D tensor mesh with shared time axis."""

    Rx: float
    Ry: float
    dx: float
    dy: float
    dt: float
    T: float
    Mx: int
    My: int
    L: int

    ndim = 2

    @property
    def n_nodes(self) -> tuple[int, int]:
        return (2 * self.Mx + 1, 2 * self.My + 1)

    @property
    def n_times(self) -> int:
        return self.L + 1

    @property
    def xs(self) -> np.ndarray:
        return np.arange(-self.Mx, self.Mx + 1) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return np.arange(-self.My, self.My + 1) * self.dy

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.L + 1) * self.dt

    def to_dict(self) -> dict:
        return {"kind": "grid2d", "Rx": self.Rx, "Ry": self.Ry, "dx": self.dx,
                "dy": self.dy, "dt": self.dt, "T": self.T, "Mx": self.Mx,
                "My": self.My, "L": self.L}


def make_grid_1d(R: float, dx: float, dt: float, T: float) -> Grid1D:
    if R <= 0 or dx <= 0 or dt <= 0 or T <= 0:
        raise InvalidParameterError("R, dx, dt, T must all be positive")
    M = _ratio_ceil(2.0 * R, dx)
    L = _ratio_floor(T, dt)
    if L < 1:
        raise InvalidParameterError(f"T={T} shorter than one time step dt={dt}")
    return Grid1D(R=R, dx=dx, dt=dt, T=T, M=M, L=L)


def make_grid_2d(Rx: float, Ry: float, dx: float, dy: float, dt: float, T: float) -> Grid2D:
    if min(Rx, Ry, dx, dy, dt, T) <= 0:
        raise InvalidParameterError("all grid parameters must be positive")
    Mx = _ratio_ceil(2.0 * Rx, dx)
    My = _ratio_ceil(2.0 * Ry, dy)
    L = _ratio_floor(T, dt)
    if L < 1:
        raise InvalidParameterError(f"T={T} shorter than one time step dt={dt}")
    return Grid2D(Rx=Rx, Ry=Ry, dx=dx, dy=dy, dt=dt, T=T, Mx=Mx, My=My, L=L)


def grid_from_dict(d: dict) -> Grid1D | Grid2D:
    kind = d.get("kind")
    if kind == "grid1d":
        return Grid1D(R=d["R"], dx=d["dx"], dt=d["dt"], T=d["T"], M=d["M"], L=d["L"])
    if kind == "grid2d":
        return Grid2D(Rx=d["Rx"], Ry=d["Ry"], dx=d["dx"], dy=d["dy"], dt=d["dt"],
                      T=d["T"], Mx=d["Mx"], My=d["My"], L=d["L"])
    raise InvalidInputError(f"unknown grid kind {kind!r}")


def _space_shape(grid) -> tuple[int, ...]:
    if isinstance(grid, Grid1D):
        return (grid.n_nodes,)
    return grid.n_nodes


def cell_volume(grid) -> float:
    """Spatial quadrature weight per node (dx in 1D, dx*dy in 2D)."""
    if isinstance(grid, Grid1D):
        return grid.dx
    return grid.dx * grid.dy


@dataclass(frozen=True)
class DensityTrajectory:
    """Density samples rho(t_l, x_m) on a grid; values are read-only."""

    grid: Grid1D | Grid2D
    values: np.ndarray
    noisy: bool = False
    provenance: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        expected = (self.grid.n_times,) + _space_shape(self.grid)
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != expected:
            raise InvalidInputError(f"values shape {v.shape} != expected {expected}")
        if not np.isfinite(v).all():
            raise InvalidInputError("trajectory contains non-finite values")
        if not self.noisy and v.min() < 0.0:
            raise InvalidInputError("noise-free trajectory has negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mass(self, l: int | None = None) -> float | np.ndarray:
        """Discrete mass sum(rho)*cell_volume, per slice or for one slice."""
        w = cell_volume(self.grid)
        axes = tuple(range(1, self.values.ndim))
        masses = self.values.sum(axis=axes) * w
        return masses if l is None else float(masses[l])

    def slice(self, l: int) -> np.ndarray:
        return self.values[l]


def restrict(traj: DensityTrajectory, cx: int, ct: int, cy: int | None = None) -> DensityTrajectory:
    """Subsample a trajectory by integer factors in space and time.

    Keeps nodes {0, +-cx*dx, ...}; requires the factors to divide the index
    ranges so the coarse mesh keeps the origin and both endpoints.
    """
    g = traj.grid
    if cx < 1 or ct < 1 or (cy is not None and cy < 1):
        raise InvalidParameterError("downsampling factors must be >= 1")
    if g.L % ct != 0:
        raise IndexAlignmentError(f"ct={ct} does not divide L={g.L}")
    if isinstance(g, Grid1D):
        if g.M % cx != 0:
            raise IndexAlignmentError(f"cx={cx} does not divide M={g.M}")
        M2, L2 = g.M // cx, g.L // ct
        g2 = Grid1D(R=g.R, dx=g.dx * cx, dt=g.dt * ct, T=L2 * (g.dt * ct), M=M2, L=L2)
        vals = traj.values[::ct, ::cx]
    else:
        cy = cx if cy is None else cy
        if g.Mx % cx != 0 or g.My % cy != 0:
            raise IndexAlignmentError(f"({cx},{cy}) does not divide (Mx,My)=({g.Mx},{g.My})")
        Mx2, My2, L2 = g.Mx // cx, g.My // cy, g.L // ct
        g2 = Grid2D(Rx=g.Rx, Ry=g.Ry, dx=g.dx * cx, dy=g.dy * cy, dt=g.dt * ct,
                    T=L2 * (g.dt * ct), Mx=Mx2, My=My2, L=L2)
        vals = traj.values[::ct, ::cx, ::cy]
    prov = dict(traj.provenance)
    prov["restricted_by"] = [cx, ct] if cy is None else [cx, cy, ct]
    return DensityTrajectory(grid=g2, values=np.ascontiguousarray(vals),
                             noisy=traj.noisy, provenance=prov)


def save_trajectory(traj: DensityTrajectory, path) -> None:
    """Binary container: magic, length-prefixed JSON header, float64 payload."""
    header = {
        "grid": traj.grid.to_dict(),
        "noisy": traj.noisy,
        "provenance": traj.provenance,
        "shape": list(traj.values.shape),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(traj.values, dtype="<f8").tobytes())


def load_trajectory(path) -> DensityTrajectory:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise InvalidInputError(f"{path} is not a trajectory container")
        (n,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(n).decode("utf-8"))
        data = np.frombuffer(f.read(), dtype="<f8").reshape(header["shape"])
    grid = grid_from_dict(header["grid"])
    return DensityTrajectory(grid=grid, values=data.copy(), noisy=header["noisy"],
                             provenance=header.get("provenance", {}))


def export_csv(traj: DensityTrajectory, path) -> None:
    """Plain-text export: one row per (t, x[, y], rho) sample."""
    g = traj.grid
    with open(path, "w") as f:
        if isinstance(g, Grid1D):
            f.write("t,x,rho\n")
            for l, t in enumerate(g.ts):
                for x, r in zip(g.xs, traj.values[l]):
                    f.write(f"{t!r},{x!r},{r!r}\n")
        else:
            f.write("t,x,y,rho\n")
            for l, t in enumerate(g.ts):
                for i, x in enumerate(g.xs):
                    for y, r in zip(g.ys, traj.values[l, i]):
                        f.write(f"{t!r},{x!r},{y!r},{r!r}\n")
