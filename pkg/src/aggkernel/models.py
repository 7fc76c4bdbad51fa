"""Model ingredients: diffusion laws, external potentials, radial interaction
kernels, and dictionaries of candidate kernels.

A radial interaction is described by its potential profile Phi(r) together
with the kernel phi(r) = Phi'(r).  In 2D the object actually expanded in a
dictionary is g(r) = phi(r)/r, so that grad Phi(x) = g(|x|) * x.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameterError

EPS_RHO = 1e-14  # density floor inside log-law evaluations


@dataclass(frozen=True)
class DiffusionLaw:
    """H(rho) with kind 'none', 'linear' (kappa*rho*(log rho - 1)) or
    'power' (kappa*rho^m/(m-1))."""

    kind: str = "none"
    kappa: float = 0.0
    m: float = 2.0

    def __post_init__(self):
        if self.kind not in ("none", "linear", "power"):
            raise InvalidParameterError(f"unknown diffusion kind {self.kind!r}")
        if self.kind != "none" and self.kappa <= 0:
            raise InvalidParameterError("kappa must be positive")
        if self.kind == "power" and self.m <= 1:
            raise InvalidParameterError("power diffusion needs m > 1")

    def h_prime(self, rho: np.ndarray) -> np.ndarray:
        """H'(rho); floors the argument so vacuum states stay finite."""
        if self.kind == "none":
            return np.zeros_like(rho)
        if self.kind == "linear":
            return self.kappa * np.log(np.maximum(rho, EPS_RHO))
        return (self.kappa * self.m / (self.m - 1.0)) * np.maximum(rho, 0.0) ** (self.m - 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa, "m": self.m}


_POTENTIALS: dict[str, tuple[Callable, Callable]] = {
    # tag -> (V(x...), grad V components)
    "zero": (lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)),
    "double_well": (lambda x: x**4 / 4.0 - x**2 / 2.0, lambda x: x**3 - x),
    "harmonic": (lambda x: x**2 / 2.0, lambda x: x),
}


@dataclass(frozen=True)
class PotentialFn:
    """External potential with analytic gradient, referenced by tag so model
    specs stay serializable."""

    tag: str

    def __post_init__(self):
        if self.tag not in _POTENTIALS:
            raise InvalidParameterError(f"unknown potential tag {self.tag!r}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return _POTENTIALS[self.tag][0](np.asarray(x, dtype=float))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return _POTENTIALS[self.tag][1](np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"tag": self.tag}


@dataclass(frozen=True)
class RadialKernel:
    """Radial interaction: potential profile Phi, kernel phi = Phi', and the
    2D expansion object g = phi/r.  `structure` names an analytic family so
    exact coefficient matching and serialization are possible."""

    Phi: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray] | None = None
    tag: str = "custom"
    structure: dict | None = None
    support_radius: float | None = None

    def potential(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self.Phi(r)
        if self.support_radius is not None:
            out = np.where(r <= self.support_radius, out, self.Phi(np.float64(self.support_radius)))
        return out

    def kernel(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self.phi(r)
        if self.support_radius is not None:
            out = np.where(r <= self.support_radius, out, 0.0)
        return out

    def slope(self, r):
        """g(r) = phi(r)/r with the removable singularity handled."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.g is not None:
            out = self.g(r)
        else:
            rs = np.where(r > 0, r, 1.0)
            out = np.where(r > 0, self.phi(r) / rs, 0.0)
        if self.support_radius is not None:
            out = np.where(r <= self.support_radius, out, 0.0)
        return out

    def to_dict(self) -> dict:
        return {"tag": self.tag, "structure": self.structure,
                "support_radius": self.support_radius}


def hat_attraction(depth: float = 5.0, reach: float = 1.0) -> RadialKernel:
    """Phi(r) = -depth*(1 - r/reach)_+, i.e. phi = (depth/reach) on [0, reach)."""
    a = depth / reach

    def Phi(r):
        return -depth * np.clip(1.0 - r / reach, 0.0, None)

    def phi(r):
        return np.where(r < reach, a, 0.0)

    return RadialKernel(Phi=Phi, phi=phi, tag="hat_attraction",
                        structure={"family": "piecewise_const",
                                   "pieces": [[0.0, reach, a]],
                                   "params": {"depth": depth, "reach": reach}})


def gaussian_sum_potential(amplitudes, rates, tag="gaussian_sum") -> RadialKernel:
    """Phi(r) = sum_j a_j exp(-w_j r^2); phi(r) = sum_j (-2 a_j w_j) r exp(-w_j r^2)."""
    amps = np.asarray(amplitudes, dtype=float)
    ws = np.asarray(rates, dtype=float)

    def Phi(r):
        r = np.asarray(r, dtype=float)
        return sum(a * np.exp(-w * r**2) for a, w in zip(amps, ws))

    def phi(r):
        r = np.asarray(r, dtype=float)
        return sum(-2.0 * a * w * r * np.exp(-w * r**2) for a, w in zip(amps, ws))

    def g(r):
        r = np.asarray(r, dtype=float)
        return sum(-2.0 * a * w * np.exp(-w * r**2) for a, w in zip(amps, ws))

    terms = [[-2.0 * a * w, w] for a, w in zip(amps, ws)]
    return RadialKernel(Phi=Phi, phi=phi, g=g, tag=tag,
                        structure={"family": "gaussian_r", "terms": terms,
                                   "params": {"amplitudes": amps.tolist(), "rates": ws.tolist()}})


def quadratic_attraction() -> RadialKernel:
    """Phi(r) = r^2/2, phi(r) = r, g(r) = 1."""
    return RadialKernel(Phi=lambda r: np.asarray(r, float)**2 / 2.0,
                        phi=lambda r: np.asarray(r, float).copy(),
                        g=lambda r: np.ones_like(np.asarray(r, float)),
                        tag="quadratic",
                        structure={"family": "monomial", "terms": [[1.0, 1]]})


def scaled_kernel(kernel: RadialKernel, factor: float) -> RadialKernel:
    """Pointwise multiple factor*W, used for perturbation families (1+eps)W.

    The result evaluates through closures only; the analytic structure tag is
    dropped, so it cannot be serialized or matched for true coefficients.
    """
    factor = float(factor)
    return RadialKernel(Phi=lambda r: factor * kernel.Phi(r),
                        phi=lambda r: factor * kernel.phi(r),
                        g=None if kernel.g is None else (lambda r: factor * kernel.g(r)),
                        tag=f"{kernel.tag}*{factor:g}",
                        structure=None,
                        support_radius=kernel.support_radius)


def kernel_from_dict(d: dict) -> RadialKernel:
    s = d.get("structure") or {}
    fam = s.get("family")
    p = s.get("params", {})
    if fam == "piecewise_const" and d.get("tag") == "hat_attraction":
        k = hat_attraction(depth=p["depth"], reach=p["reach"])
    elif fam == "gaussian_r":
        k = gaussian_sum_potential(p["amplitudes"], p["rates"], tag=d.get("tag", "gaussian_sum"))
    elif fam == "monomial" and d.get("tag") == "quadratic":
        k = quadratic_attraction()
    else:
        raise InvalidParameterError(f"cannot rebuild kernel from {d!r}")
    if d.get("support_radius") is not None:
        k = RadialKernel(Phi=k.Phi, phi=k.phi, g=k.g, tag=k.tag,
                         structure=k.structure, support_radius=d["support_radius"])
    return k


@dataclass(frozen=True)
class BasisSet:
    """Dictionary of candidate radial kernels (1-based identities in reports
    follow list order)."""

    elements: tuple[RadialKernel, ...]
    family: str
    params: dict = field(default_factory=dict)
    support_radius: float | None = None

    @property
    def n(self) -> int:
        return len(self.elements)

    def kernel_values(self, r: np.ndarray) -> np.ndarray:
        """Stack of psi_i(r), shape (n, *r.shape)."""
        return np.stack([e.kernel(r) for e in self.elements])

    def potential_values(self, r: np.ndarray) -> np.ndarray:
        return np.stack([e.potential(r) for e in self.elements])

    def slope_values(self, r: np.ndarray) -> np.ndarray:
        return np.stack([e.slope(r) for e in self.elements])

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "params": self.params,
                "support_radius": self.support_radius}

    def content_hash(self) -> str:
        return sha256_of(self.to_dict())


def _indicator_element(a: float, b: float) -> RadialKernel:
    def Phi(r):
        return np.clip(r, a, b) - a

    def phi(r):
        return np.where((r >= a) & (r < b), 1.0, 0.0)

    return RadialKernel(Phi=Phi, phi=phi, tag=f"chi[{a:g},{b:g})")


def _linear_element(a: float, b: float) -> RadialKernel:
    def Phi(r):
        return (np.clip(r, a, b)**2 - a**2) / 2.0

    def phi(r):
        r = np.asarray(r, dtype=float)
        return np.where((r >= a) & (r < b), r, 0.0)

    return RadialKernel(Phi=Phi, phi=phi, tag=f"r*chi[{a:g},{b:g})")


def basis_piecewise(cells: int, degree: int = 0, domain_end: float = 6.0,
                    support_radius: float | None = None) -> BasisSet:
    """Piecewise polynomial dictionary on [0, domain_end) split into `cells`
    half-open cells.  degree 0 gives indicators; degree 1 interleaves
    (indicator, r*indicator) per cell."""
    if cells < 1 or degree not in (0, 1):
        raise InvalidParameterError("cells >= 1 and degree in {0, 1} required")
    edges = np.linspace(0.0, domain_end, cells + 1)
    elems: list[RadialKernel] = []
    for a, b in zip(edges[:-1], edges[1:]):
        elems.append(_indicator_element(a, b))
        if degree == 1:
            elems.append(_linear_element(a, b))
    return BasisSet(elements=tuple(elems), family="piecewise",
                    params={"cells": cells, "degree": degree, "domain_end": domain_end},
                    support_radius=support_radius)


def basis_polynomial(n: int, scale: float = 6.0, form: str = "kernel",
                     support_radius: float | None = None) -> BasisSet:
    """Monomial dictionaries.

    form='kernel':  psi_i(r) = (r/scale)^(i-1), the 1D convention where the
                    dictionary expands phi directly.
    form='slope':   the expanded object is g_i(r) = (r/scale)^(i-1) (the 2D
                    convention for phi(r)/r), so psi_i(r) = r*(r/scale)^(i-1).
    """
    if n < 1 or scale <= 0:
        raise InvalidParameterError("n >= 1 and scale > 0 required")
    if form not in ("kernel", "slope"):
        raise InvalidParameterError(f"unknown polynomial form {form!r}")

    def make(k: int) -> RadialKernel:
        if form == "kernel":
            def phi(r):
                return (np.asarray(r, float) / scale) ** k

            def Phi(r):
                r = np.asarray(r, float)
                return scale * (r / scale) ** (k + 1) / (k + 1)

            def g(r):
                # phi/r = r^(k-1)/scale^k; the k=0 element has no finite limit
                r = np.asarray(r, float)
                if k == 0:
                    rs = np.where(r > 0, r, 1.0)
                    return np.where(r > 0, 1.0 / rs, 0.0)
                return r ** (k - 1) / scale**k
        else:
            def phi(r):
                r = np.asarray(r, float)
                return r * (r / scale) ** k

            def Phi(r):
                r = np.asarray(r, float)
                return r**2 * (r / scale) ** k / (k + 2)

            def g(r):
                return (np.asarray(r, float) / scale) ** k

        return RadialKernel(Phi=Phi, phi=phi, g=g, tag=f"poly{k}:{form}")

    return BasisSet(elements=tuple(make(k) for k in range(n)), family="polynomial",
                    params={"n": n, "scale": scale, "form": form},
                    support_radius=support_radius)


def basis_gaussian(weights, form: str = "scaled-r", scale: float = 6.0,
                   support_radius: float | None = None) -> BasisSet:
    """Gaussian dictionaries.

    form='scaled-r':  psi_w(r) = (r/scale) exp(-w r^2),
                      Psi_w(r) = (1 - exp(-w r^2)) / (2 w scale).
    form='slope':     the expanded object is g_w(r) = -2w exp(-w r^2), i.e.
                      psi_w(r) = -2w r exp(-w r^2), Psi_w(r) = exp(-w r^2) - 1.
    """
    ws = [float(w) for w in weights]
    if not ws or min(ws) <= 0:
        raise InvalidParameterError("weights must be positive")
    if form not in ("scaled-r", "slope"):
        raise InvalidParameterError(f"unknown gaussian form {form!r}")

    def make(w: float) -> RadialKernel:
        if form == "scaled-r":
            def phi(r):
                r = np.asarray(r, float)
                return (r / scale) * np.exp(-w * r**2)

            def Phi(r):
                r = np.asarray(r, float)
                return (1.0 - np.exp(-w * r**2)) / (2.0 * w * scale)

            def g(r):
                r = np.asarray(r, float)
                return np.exp(-w * r**2) / scale

            return RadialKernel(Phi=Phi, phi=phi, g=g, tag=f"(r/{scale:g})e^-{w:g}r2")

        def phi(r):
            r = np.asarray(r, float)
            return -2.0 * w * r * np.exp(-w * r**2)

        def Phi(r):
            r = np.asarray(r, float)
            return np.exp(-w * r**2) - 1.0

        def g(r):
            r = np.asarray(r, float)
            return -2.0 * w * np.exp(-w * r**2)

        return RadialKernel(Phi=Phi, phi=phi, g=g, tag=f"-2({w:g})e^-{w:g}r2")

    params = {"weights": ws, "form": form}
    if form == "scaled-r":
        params["scale"] = scale
    return BasisSet(elements=tuple(make(w) for w in ws), family="gaussian",
                    params=params, support_radius=support_radius)


def basis_from_dict(d: dict) -> BasisSet:
    fam, p, sup = d["family"], d["params"], d.get("support_radius")
    if fam == "piecewise":
        return basis_piecewise(p["cells"], p["degree"], p["domain_end"], sup)
    if fam == "polynomial":
        return basis_polynomial(p["n"], p["scale"], p.get("form", "kernel"), sup)
    if fam == "gaussian":
        return basis_gaussian(p["weights"], p["form"], p.get("scale", 6.0), sup)
    raise InvalidParameterError(f"unknown basis family {fam!r}")


def kernel_from_coefficients(basis: BasisSet, c: np.ndarray,
                             tag: str = "synthesized") -> RadialKernel:
    """Radial kernel with phi = sum c_i psi_i (and matching Phi, g)."""
    c = np.asarray(c, dtype=float)
    if c.shape != (basis.n,):
        raise InvalidParameterError(f"coefficient shape {c.shape} != ({basis.n},)")
    elems = basis.elements

    def Phi(r):
        return sum(ci * e.Phi(np.asarray(r, float)) for ci, e in zip(c, elems) if ci != 0.0) \
            if np.any(c) else np.zeros_like(np.asarray(r, float))

    def phi(r):
        return sum(ci * e.phi(np.asarray(r, float)) for ci, e in zip(c, elems) if ci != 0.0) \
            if np.any(c) else np.zeros_like(np.asarray(r, float))

    def g(r):
        return sum(ci * e.slope(np.asarray(r, float)) for ci, e in zip(c, elems) if ci != 0.0) \
            if np.any(c) else np.zeros_like(np.asarray(r, float))

    return RadialKernel(Phi=Phi, phi=phi, g=g, tag=tag,
                        support_radius=basis.support_radius)


@dataclass(frozen=True)
class ModelSpec:
    """Full forward model: diffusion + external potential + interaction."""

    diffusion: DiffusionLaw = field(default_factory=DiffusionLaw)
    confinement: PotentialFn | None = None
    interaction: RadialKernel | None = None

    def to_dict(self) -> dict:
        return {
            "diffusion": self.diffusion.to_dict(),
            "confinement": self.confinement.to_dict() if self.confinement else None,
            "interaction": self.interaction.to_dict() if self.interaction else None,
        }

    def content_hash(self) -> str:
        return sha256_of(self.to_dict())

    def with_interaction(self, kernel: RadialKernel | None) -> "ModelSpec":
        return ModelSpec(diffusion=self.diffusion, confinement=self.confinement,
                         interaction=kernel)


def sha256_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=repr).encode()).hexdigest()


def _verify_synthesis(basis: BasisSet, c: np.ndarray, target: Callable,
                      r_max: float, use_slope: bool, tol: float = 1e-10) -> bool:
    r = np.linspace(0.0, r_max, 1001)
    vals = basis.slope_values(r) if use_slope else basis.kernel_values(r)
    approx = c @ vals
    want = target(r)
    scale = max(1.0, float(np.max(np.abs(want))))
    return bool(np.max(np.abs(approx - want)) <= tol * scale)


def true_coefficients(kernel: RadialKernel, basis: BasisSet,
                      use_slope: bool = False) -> np.ndarray | None:
    """Exact expansion of `kernel` in `basis`, or None when not representable.

    Matches analytically through the kernel's structure tag where possible and
    always verifies the synthesized expansion pointwise on a fine radial grid.
    `use_slope` matches g = phi/r (the 2D convention) instead of phi.
    """
    s = kernel.structure or {}
    fam = s.get("family")
    p = basis.params
    c = None
    r_max = basis.support_radius if basis.support_radius else 2.0 * p.get("domain_end", 6.0)

    if basis.family == "piecewise" and not use_slope:
        # per-cell polynomial fit; exact for kernels that are piecewise of the
        # matching degree on exactly these cells
        cells, degree, end = p["cells"], p["degree"], p["domain_end"]
        edges = np.linspace(0.0, end, cells + 1)
        per = degree + 1
        c = np.zeros(basis.n)
        for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            rs = np.linspace(a, b, 9, endpoint=False)[1:]
            vals = kernel.kernel(rs)
            X = np.vander(rs, per, increasing=True)
            coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
            c[per * j: per * (j + 1)] = coef
        outside = np.linspace(end, r_max, 101) if r_max > end else None
        if outside is not None and np.max(np.abs(kernel.kernel(outside[1:]))) > 1e-10:
            return None
    elif basis.family == "polynomial":
        scale = p["scale"]
        if fam == "monomial":
            c = np.zeros(basis.n)
            for amp, k in s["terms"]:  # term: amp * r^k in phi
                j = int(k) - (1 if use_slope else 0)  # slope of r^k is r^(k-1)
                if not (0 <= j < basis.n):
                    return None
                c[j] += amp * scale**j
        else:
            # dense fit on Chebyshev-like nodes, orders are low enough
            want = kernel.slope if use_slope else kernel.kernel
            rs = 0.5 * r_max * (1.0 - np.cos(np.linspace(0, np.pi, 4 * basis.n + 1)))
            vals = basis.slope_values(rs) if use_slope else basis.kernel_values(rs)
            c, *_ = np.linalg.lstsq(vals.T, want(rs), rcond=None)
    elif basis.family == "gaussian":
        if fam != "gaussian_r":
            return None
        ws = np.asarray(p["weights"])
        c = np.zeros(basis.n)
        for amp, w in s["terms"]:  # term: amp * r * exp(-w r^2) in phi
            hit = np.where(np.abs(ws - w) <= 1e-12 * max(1.0, abs(w)))[0]
            if hit.size != 1:
                return None
            i = int(hit[0])
            if p["form"] == "scaled-r":
                c[i] += amp * p["scale"]
            else:  # slope form: element phi = -2 w r exp(-w r^2)
                c[i] += -amp / (2.0 * ws[i])
    else:
        return None

    if c is None:
        return None
    # least-squares branches leave roundoff dust on elements that vanish
    top = float(np.max(np.abs(c))) if c.size else 0.0
    if top > 0.0:
        c[np.abs(c) < 1e-10 * top] = 0.0
    target = kernel.slope if use_slope else kernel.kernel
    if not _verify_synthesis(basis, c, target, r_max, use_slope):
        return None
    return c
