"""Assembly of the quadratic regression system A c = b from trajectory data.

For a dictionary {psi_i} with potentials {Psi_i}, the system entries are the
space-time quadratures
  A(i,j) = (1/T) sum_{l,m} C^i C^j rho dV dt,
  b(i)  = -(1/T) sum_{l,m} (d_t rho * R^i + C^i . F) dV dt,
with the convolution fields
  R^i(t,x) = sum_k Psi_i(x - x_k) rho(t, x_k) dV,
  C^i(t,x) = sum_k grad Psi_i(x - x_k) rho(t, x_k) dV,
and F = rho * (d_x+ H'(rho) + grad V) built from one-sided differences.

Time sums run over l = 1..L.  The forward time difference at l = L, which
would reach past the stored data, is taken as zero (constant-in-time
extension); the prefactor uses T = L*dt, the horizon actually covered.
Samples outside the stored node range are zero.

The alternative route for A precomputes the data-only kernel
  G(y, z) = sum_{l,m} rho(t_l, x_m - y) rho(t_l, x_m - z) rho(t_l, x_m) dx dt
on the offset lattice and contracts it against dictionary gradients; it is
algebraically identical to the direct route (1D only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .errors import BudgetError, InvalidInputError
from .grids import DensityTrajectory, Grid1D, Grid2D, cell_volume
from .models import BasisSet, ModelSpec


@dataclass(frozen=True)
class LinearSystem:
    """Assembled normal-equation pair (A, b) plus provenance metadata."""

    A: np.ndarray
    b: np.ndarray
    t_eff: float
    path: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise InvalidInputError("A must be square and b conforming")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class GKernel:
    """Data-only kernel G on the offset lattice, with quadrature prefactors
    already applied to the stored sums."""

    values: np.ndarray  # (4M+1, 4M+1), includes dx*dt
    grid: Grid1D
    t_eff: float
    n_slices: int


def _used_range(traj: DensityTrajectory) -> tuple[int, int]:
    """Time indices l = 1..L entering the quadratures."""
    L = traj.grid.L
    if L < 1:
        raise InvalidInputError("assembly needs at least two stored time slices")
    return 1, L


def fd_time(traj: DensityTrajectory) -> np.ndarray:
    """Forward time differences (rho^{l+1} - rho^l)/dt for l = 1..L.

    The l = L slice has no successor; the constant-in-time extension makes
    its difference zero.
    """
    lo, hi = _used_range(traj)
    v = traj.values
    out = np.zeros_like(v[lo: hi + 1])
    out[:-1] = (v[lo + 1: hi + 1] - v[lo: hi]) / traj.grid.dt
    return out


def fd_space(values: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Forward spatial difference with the one-sided boundary closure
    (the sample beyond the top index is treated as zero)."""
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    lo = [slice(None)] * v.ndim
    hi = [slice(None)] * v.ndim
    lo[axis] = slice(0, v.shape[axis] - 1)
    hi[axis] = slice(1, v.shape[axis])
    out[tuple(lo)] = (v[tuple(hi)] - v[tuple(lo)]) / dx
    last = [slice(None)] * v.ndim
    last[axis] = v.shape[axis] - 1
    out[tuple(last)] = -v[tuple(last)] / dx
    return out


def _offsets_1d(grid: Grid1D) -> np.ndarray:
    return np.arange(-(grid.n_nodes - 1), grid.n_nodes) * grid.dx


def _grad_table_1d(basis: BasisSet, grid: Grid1D) -> np.ndarray:
    """grad Psi_i sampled on the offset lattice; zero at the origin."""
    off = _offsets_1d(grid)
    tab = basis.kernel_values(np.abs(off)) * np.sign(off)
    tab[:, off == 0.0] = 0.0
    return tab


def _conv_full_1d(slices: np.ndarray, tab: np.ndarray, dx: float) -> np.ndarray:
    """Convolve every time slice with an offset table in one batched pass."""
    k = tab.shape[0] // 2
    n = slices.shape[-1]
    full = fftconvolve(slices, tab[None, :], axes=1)
    return full[:, k: k + n] * dx


def _conv_full_2d(slices: np.ndarray, tab: np.ndarray, w: float) -> np.ndarray:
    kx, ky = tab.shape[0] // 2, tab.shape[1] // 2
    nx, ny = slices.shape[-2:]
    full = fftconvolve(slices, tab[None, :, :], axes=(1, 2))
    return full[:, kx: kx + nx, ky: ky + ny] * w


def conv_R(basis: BasisSet, traj: DensityTrajectory,
           time_slice: slice | None = None) -> np.ndarray:
    """Mollified potentials R^i = Psi_i * rho, shape (n, nt, *space)."""
    g = traj.grid
    vals = traj.values if time_slice is None else traj.values[time_slice]
    if isinstance(g, Grid1D):
        tabs = basis.potential_values(np.abs(_offsets_1d(g)))
        return np.stack([_conv_full_1d(vals, t, g.dx) for t in tabs])
    ox = np.arange(-(g.n_nodes[0] - 1), g.n_nodes[0]) * g.dx
    oy = np.arange(-(g.n_nodes[1] - 1), g.n_nodes[1]) * g.dy
    rr = np.hypot(ox[:, None], oy[None, :])
    w = cell_volume(g)
    return np.stack([_conv_full_2d(vals, e.potential(rr), w) for e in basis.elements])


def conv_C(basis: BasisSet, traj: DensityTrajectory,
           time_slice: slice | None = None) -> np.ndarray:
    """Mollified gradients C^i = grad Psi_i * rho.

    Shape (n, nt, nodes) in 1D; (n, nt, nx, ny, 2) in 2D with the component
    axis last.
    """
    g = traj.grid
    vals = traj.values if time_slice is None else traj.values[time_slice]
    if isinstance(g, Grid1D):
        tabs = _grad_table_1d(basis, g)
        return np.stack([_conv_full_1d(vals, t, g.dx) for t in tabs])
    ox = np.arange(-(g.n_nodes[0] - 1), g.n_nodes[0]) * g.dx
    oy = np.arange(-(g.n_nodes[1] - 1), g.n_nodes[1]) * g.dy
    rr = np.hypot(ox[:, None], oy[None, :])
    w = cell_volume(g)
    out = []
    for e in basis.elements:
        s = e.slope(rr)
        cx = _conv_full_2d(vals, s * ox[:, None], w)
        cy = _conv_full_2d(vals, s * oy[None, :], w)
        out.append(np.stack([cx, cy], axis=-1))
    return np.stack(out)


def flux_F(traj: DensityTrajectory, model: ModelSpec,
           time_slice: slice | None = None) -> np.ndarray:
    """Local flux F = rho * (d_x+ H'(rho) + grad V); vector-valued in 2D."""
    g = traj.grid
    vals = traj.values if time_slice is None else traj.values[time_slice]
    hp = model.diffusion.h_prime(vals)
    if isinstance(g, Grid1D):
        drive = fd_space(hp, g.dx, axis=-1)
        if model.confinement is not None:
            drive = drive + model.confinement.grad(g.xs)
        return vals * drive
    if model.confinement is not None and model.confinement.tag != "zero":
        raise InvalidInputError("2D assembly supports zero confinement only")
    fx = fd_space(hp, g.dx, axis=-2)
    fy = fd_space(hp, g.dy, axis=-1)
    return np.stack([vals * fx, vals * fy], axis=-1)


def assemble_direct(basis: BasisSet, traj: DensityTrajectory,
                    model: ModelSpec) -> LinearSystem:
    """A and b by direct vectorized quadrature over l = 1..L."""
    g = traj.grid
    lo, hi = _used_range(traj)
    used = slice(lo, hi + 1)
    n_used = hi - lo + 1
    t_eff = n_used * g.dt
    w_quad = cell_volume(g) * g.dt / t_eff

    rho_used = traj.values[used]
    C = conv_C(basis, traj, time_slice=used)
    R = conv_R(basis, traj, time_slice=used)
    F = flux_F(traj, model, time_slice=used)
    dtr = fd_time(traj)

    n = basis.n
    if isinstance(g, Grid1D):
        Cw = C * rho_used  # broadcast over (n, nt, nodes)
        A = (C.reshape(n, -1) @ Cw.reshape(n, -1).T) * w_quad
        b = -(np.tensordot(R, dtr, axes=([1, 2], [0, 1]))
              + np.tensordot(C, F, axes=([1, 2], [0, 1]))) * w_quad
    else:
        Cw = C * rho_used[..., None]
        A = (C.reshape(n, -1) @ Cw.reshape(n, -1).T) * w_quad
        b = -(np.tensordot(R, dtr, axes=([1, 2, 3], [0, 1, 2]))
              + np.tensordot(C, F, axes=([1, 2, 3, 4], [0, 1, 2, 3]))) * w_quad
    A = 0.5 * (A + A.T)
    return LinearSystem(A=A, b=b, t_eff=t_eff, path="direct",
                        meta={"basis": basis.to_dict(), "grid": g.to_dict(),
                              "model": model.content_hash(), "n_slices": n_used})


def assemble_G(traj: DensityTrajectory, budget_bytes: int = 2 << 30) -> GKernel:
    """Precompute the cubic data kernel G on the offset lattice (1D only)."""
    g = traj.grid
    if not isinstance(g, Grid1D):
        raise InvalidInputError("the G-kernel route is 1D only")
    lo, hi = _used_range(traj)
    n_used = hi - lo + 1
    N = g.n_nodes
    K = N - 1  # offsets span [-K, K] * dx around each node
    side = 2 * K + 1
    need = side * side * 8
    if need > budget_bytes:
        raise BudgetError(f"G kernel needs {need} bytes > budget {budget_bytes}")
    G = np.zeros((side, side))
    for l in range(lo, hi + 1):
        rho = traj.values[l]
        padded = np.zeros(N + 2 * K)
        padded[K: K + N] = rho
        S = sliding_window_view(padded, N)[::-1]  # row a+K holds rho shifted by a
        G += (S * rho) @ S.T
    G *= g.dx * g.dt
    G = 0.5 * (G + G.T)
    return GKernel(values=G, grid=g, t_eff=n_used * g.dt, n_slices=n_used)


def assemble_via_G(basis: BasisSet, gker: GKernel,
                   b: np.ndarray | None = None) -> LinearSystem:
    """Contract dictionary gradients against a precomputed G kernel.

    Only A is reconstructable from G; pass `b` from the direct route when a
    complete system is needed, else it is filled with zeros.
    """
    g = gker.grid
    Ktab = _grad_table_1d(basis, g)
    A = (Ktab @ gker.values @ Ktab.T) * (g.dx**2 / gker.t_eff)
    A = 0.5 * (A + A.T)
    bb = np.zeros(basis.n) if b is None else np.asarray(b, dtype=float)
    return LinearSystem(A=A, b=bb, t_eff=gker.t_eff, path="via-G",
                        meta={"basis": basis.to_dict(), "grid": g.to_dict(),
                              "b_filled": b is not None, "n_slices": gker.n_slices})


_SYS_MAGIC = b"AGKS"


def save_system(system: LinearSystem, prefix) -> None:
    """Structured-text metadata next to a flat binary payload.

    The payload is magic + row count + raw little-endian float64 for A then
    b, so identical systems produce identical bytes (no archive metadata).
    """
    import json
    import struct
    from pathlib import Path

    prefix = Path(prefix)
    n = int(system.b.shape[0])
    meta = {"t_eff": system.t_eff, "path": system.path, "n": n,
            "meta": system.meta}
    prefix.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    with open(prefix.with_suffix(".bin"), "wb") as f:
        f.write(_SYS_MAGIC)
        f.write(struct.pack("<Q", n))
        f.write(np.ascontiguousarray(system.A, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(system.b, dtype="<f8").tobytes())


def load_system(prefix) -> LinearSystem:
    import json
    import struct
    from pathlib import Path

    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    with open(prefix.with_suffix(".bin"), "rb") as f:
        if f.read(4) != _SYS_MAGIC:
            raise InvalidInputError(f"{prefix} is not a linear-system container")
        (n,) = struct.unpack("<Q", f.read(8))
        A = np.frombuffer(f.read(n * n * 8), dtype="<f8").reshape(n, n).copy()
        b = np.frombuffer(f.read(n * 8), dtype="<f8").copy()
    return LinearSystem(A=A, b=b, t_eff=meta["t_eff"],
                        path=meta["path"], meta=meta["meta"])
