"""Sparse solvers for the assembled normal-equation system.

`partinv` is the greedy partial-inversion iteration: correlate, keep the K
largest entries, least-squares on that support through a truncated-SVD
pseudoinverse, then let complement correlations with the residual compete
against the fitted values for the next support.  `subspace_pursuit` and
`stls` are the comparison baselines; `pinv_solve` is the plain least-squares
solve used by all of them.

All selections break ties deterministically: larger magnitude first, then
smaller index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class SparseSolution:
    """Coefficients with bookkeeping; `support` holds 0-based indices sorted
    ascending, `re` the quadratic residual error c'Ac - 2b'c when A is square."""

    c: np.ndarray
    support: tuple[int, ...]
    solver: str
    iterations: int
    residual_norm: float
    re: float | None = None


def pinv_solve(A: np.ndarray, b: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Minimum-norm least squares through SVD truncation at rel_tol * sigma_max."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return np.linalg.pinv(A, rcond=rel_tol) @ np.asarray(b, dtype=float)


def residual_error(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Quadratic objective c'Ac - 2 <b, c> (the error functional up to an
    additive data constant)."""
    c = np.asarray(c, dtype=float)
    return float(c @ (A @ c) - 2.0 * (np.asarray(b, float) @ c))


def restricted_ls(A: np.ndarray, b: np.ndarray, support,
                  rel_tol: float = 1e-12) -> np.ndarray:
    """Minimize the quadratic loss c'Ac - 2<b, c> over vectors supported on
    `support`: solve the restricted normal equations A[I, I] c_I = b[I]
    through the truncated pseudoinverse, zero elsewhere.  A must be square.

    On a positive semidefinite A this is the exact restricted minimizer, so
    growing the support can only lower the loss.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise InvalidParameterError("restricted_ls needs a square system")
    idx = sorted(set(int(i) for i in support))
    if not idx or idx[0] < 0 or idx[-1] >= A.shape[1]:
        raise InvalidParameterError("support must be a nonempty subset of 0..n-1")
    c = np.zeros(A.shape[1])
    c[idx] = pinv_solve(A[np.ix_(idx, idx)], b[idx], rel_tol)
    return c


def coherence(A: np.ndarray) -> float:
    """Largest absolute cosine between distinct columns; zero columns are
    skipped with a warning."""
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=0)
    keep = norms > 0
    if not keep.all():
        warnings.warn("coherence: skipping zero columns", stacklevel=2)
    cols = A[:, keep] / norms[keep]
    if cols.shape[1] < 2:
        return 0.0
    gram = np.abs(cols.T @ cols)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def _top_k(values: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest magnitudes; ties prefer the smaller index."""
    order = np.lexsort((np.arange(values.shape[0]), -np.abs(values)))
    return tuple(sorted(int(i) for i in order[:k]))


def _restricted_ls(A, b, support, rel_tol):
    c = np.zeros(A.shape[1])
    idx = list(support)
    c[idx] = pinv_solve(A[:, idx], b, rel_tol)
    r = b - A[:, idx] @ c[idx]
    return c, r


def _finish(A, b, support, solver, iterations, rel_tol) -> SparseSolution:
    c, r = _restricted_ls(A, b, support, rel_tol)
    re = residual_error(A, b, c) if A.shape[0] == A.shape[1] else None
    return SparseSolution(c=c, support=tuple(sorted(support)), solver=solver,
                          iterations=iterations,
                          residual_norm=float(np.linalg.norm(r)), re=re)


def _check_kb(A, b, k):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise InvalidParameterError("b must conform to A's rows")
    if not 1 <= k <= A.shape[1]:
        raise InvalidParameterError(f"K={k} outside 1..{A.shape[1]}")
    return A, b


def partinv(A: np.ndarray, b: np.ndarray, k: int, max_iter: int = 50,
            rel_tol: float = 1e-12, col_tol: float = 1e-2) -> SparseSolution:
    """Greedy basis pursuit by partial inversion.

    Support selection works on the column-normalized system: correlations are
    divided by column norms so that dictionary elements with very different
    scales compete fairly, and fitted values re-enter the comparison scaled by
    their column norm (the size of that column's contribution to the fit).
    Columns whose norm falls below col_tol times the largest carry less
    signal than typical quadrature and noise perturbations; after
    normalization their correlations are pure angle noise, so they are barred
    from selection.  The restricted least-squares solves always use the
    original unscaled columns.

    Stops when the support repeats, the restricted residual grows (reverting
    to the previous support), or after max_iter sweeps.
    """
    A, b = _check_kb(A, b, k)
    norms = np.linalg.norm(A, axis=0)
    top = float(norms.max()) if norms.size else 0.0
    usable = norms > col_tol * top
    scale = np.where(usable, norms, 1.0)

    def screened(v: np.ndarray) -> np.ndarray:
        out = v / scale
        out[~usable] = 0.0
        return out

    support = _top_k(screened(A.T @ b), k)
    c, r = _restricted_ls(A, b, support, rel_tol)
    best_norm = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        merged = screened(A.T @ r)
        idx = list(support)
        merged[idx] = c[idx] * scale[idx]
        new_support = _top_k(merged, k)
        if new_support == support:
            return _finish(A, b, support, "partinv", it, rel_tol)
        c_new, r_new = _restricted_ls(A, b, new_support, rel_tol)
        norm_new = float(np.linalg.norm(r_new))
        if norm_new > best_norm:
            return _finish(A, b, support, "partinv", it, rel_tol)
        support, c, r, best_norm = new_support, c_new, r_new, norm_new
    return _finish(A, b, support, "partinv", max_iter, rel_tol)


def subspace_pursuit(A: np.ndarray, b: np.ndarray, k: int, max_iter: int = 50,
                     rel_tol: float = 1e-12) -> SparseSolution:
    """Classic subspace pursuit: expand by the K best residual correlations,
    least-squares on the union, keep the K largest fitted entries."""
    A, b = _check_kb(A, b, k)
    support = _top_k(A.T @ b, k)
    c, r = _restricted_ls(A, b, support, rel_tol)
    best_norm = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        extra = _top_k(A.T @ r, k)
        union = sorted(set(support) | set(extra))
        cu = np.zeros(A.shape[1])
        cu[union] = pinv_solve(A[:, union], b, rel_tol)
        new_support = _top_k(cu, k)
        if new_support == support:
            return _finish(A, b, support, "subspace_pursuit", it, rel_tol)
        c_new, r_new = _restricted_ls(A, b, new_support, rel_tol)
        norm_new = float(np.linalg.norm(r_new))
        if norm_new > best_norm:
            return _finish(A, b, support, "subspace_pursuit", it, rel_tol)
        support, c, r, best_norm = new_support, c_new, r_new, norm_new
    return _finish(A, b, support, "subspace_pursuit", max_iter, rel_tol)


def stls(A: np.ndarray, b: np.ndarray, threshold: float, max_iter: int = 50,
         rel_tol: float = 1e-12) -> SparseSolution:
    """Sequentially thresholded least squares: alternate a full least-squares
    solve with zeroing entries below `threshold` until the active set is
    stable.  An emptied active set returns the zero vector."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if threshold < 0:
        raise InvalidParameterError("threshold must be >= 0")
    active = list(range(A.shape[1]))
    for it in range(1, max_iter + 1):
        c = np.zeros(A.shape[1])
        c[active] = pinv_solve(A[:, active], b, rel_tol)
        keep = [i for i in active if abs(c[i]) >= threshold]
        if not keep:
            z = np.zeros(A.shape[1])
            return SparseSolution(c=z, support=(), solver="stls", iterations=it,
                                  residual_norm=float(np.linalg.norm(b)),
                                  re=0.0 if A.shape[0] == A.shape[1] else None)
        if keep == active:
            return _finish(A, b, keep, "stls", it, rel_tol)
        active = keep
    return _finish(A, b, active, "stls", max_iter, rel_tol)


def least_squares(A: np.ndarray, b: np.ndarray, rel_tol: float = 1e-12) -> SparseSolution:
    """Unrestricted minimum-norm least squares, reported in the same shape as
    the sparse solvers."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    c = pinv_solve(A, b, rel_tol)
    r = b - A @ c
    re = residual_error(A, b, c) if A.shape[0] == A.shape[1] else None
    return SparseSolution(c=c, support=tuple(int(i) for i in np.flatnonzero(c)),
                          solver="least_squares", iterations=1,
                          residual_norm=float(np.linalg.norm(r)), re=re)
