"""Discrete Helmholtz solves ``z = (cI - Δ_h)^{-1} f`` with Neumann boundaries.

Three interchangeable backends share one operator:

* ``"dct"`` diagonalises the cell-centred Neumann Laplacian with a type-II
  DCT; exact up to roundoff and O(N log N), used by the time stepper.
* ``"cg"`` is Jacobi-preconditioned conjugate gradients on the sparse matrix.
* ``"dense"`` factorises the full matrix; only for small grids, and kept as
  an independent oracle for tests.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import fft

from .errors import PreconditionError, SolverError
from .grid import Grid

DEFAULT_TOL = 1e-10
DENSE_MAX_CELLS = 32 * 32
EXP_OVERFLOW = 700.0


def pcg(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    diag: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    maxiter: int = 10_000,
) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned CG for an SPD operator.

    Stops once ``||b - Ax||_2 <= tol ||b||_2`` for the *true* residual, and
    returns ``(x, iterations, relative_residual)``.  Raises
    :class:`SolverError` when ``maxiter`` is exhausted.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    inv_d = 1.0 / diag
    r = b - matvec(x)
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        z = inv_d * r
        p = z.copy()
        rz = r @ z
        while it < maxiter:
            Ap = matvec(p)
            pAp = p @ Ap
            if pAp <= 0:
                break
            a = rz / pAp
            x += a * p
            r -= a * Ap
            it += 1
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = inv_d * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        # guard against drift of the recursive residual
        r = b - matvec(x)
        new_res = np.linalg.norm(r) / bnorm
        if new_res <= tol:
            res = new_res
            break
        if it >= maxiter or new_res >= res:
            raise SolverError("conjugate gradients did not converge", new_res, it)
        res = new_res
    return x, it, float(res)


class HelmholtzSolver:
    """Solves ``(shift·I - Δ_h) z = f`` on a fixed grid.

    The solver is immutable after construction; cached factorisations are
    keyed by ``shift`` and never mutated afterwards.
    """

    def __init__(self, grid: Grid, method: str = "dct", tol: float = DEFAULT_TOL, maxiter: int | None = None):
        if method not in ("dct", "cg", "dense"):
            raise PreconditionError(f"unknown Helmholtz method {method!r}")
        if not (0 < tol <= 1e-6):
            raise PreconditionError(f"tol must lie in (0, 1e-6], got {tol}")
        if method == "dense" and grid.size > DENSE_MAX_CELLS:
            raise PreconditionError(f"dense Helmholtz solves are limited to {DENSE_MAX_CELLS} cells")
        self.grid = grid
        self.method = method
        self.tol = tol
        self.maxiter = maxiter or 10 * grid.size
        self._lu: dict[float, tuple] = {}

    def matrix(self, shift: float = 1.0):
        """Sparse ``shift·I - Δ_h`` (symmetric positive definite M-matrix)."""
        from scipy import sparse

        return (sparse.identity(self.grid.size, format="csr") * shift + self.grid.neg_laplacian_matrix).tocsr()

    def residual(self, z: np.ndarray, f: np.ndarray, shift: float = 1.0) -> float:
        r = shift * z - self.grid.laplacian(z) - f
        fn = np.linalg.norm(f)
        return float(np.linalg.norm(r) / fn) if fn > 0 else float(np.linalg.norm(r))

    def solve(self, f: np.ndarray, shift: float = 1.0, tol: float | None = None) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.grid.shape:
            raise PreconditionError(f"field shape {f.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(f)):
            raise PreconditionError("right-hand side contains non-finite values")
        if not shift > 0:
            raise PreconditionError("shift must be positive")
        if self.method == "dct":
            fh = fft.dctn(f, type=2, norm="ortho")
            fh /= shift + self.grid.laplacian_eigenvalues
            return fft.idctn(fh, type=2, norm="ortho")
        if self.method == "dense":
            lu = self._lu.get(shift)
            if lu is None:
                lu = scipy.linalg.lu_factor(self.matrix(shift).toarray())
                self._lu[shift] = lu
            return scipy.linalg.lu_solve(lu, f.ravel()).reshape(self.grid.shape)
        A = self.matrix(shift)
        x, _, _ = pcg(A.dot, f.ravel(), A.diagonal(), tol=tol or self.tol, maxiter=self.maxiter)
        return x.reshape(self.grid.shape)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.solve(f)


def helmholtz_solve(grid: Grid, f: np.ndarray, tol: float = DEFAULT_TOL, method: str = "cg") -> np.ndarray:
    """One-shot solve of ``-Δz + z = f`` with ``∂z/∂ν = 0``."""
    return HelmholtzSolver(grid, method=method, tol=tol).solve(f)


def lq_ratio(grid: Grid, z: np.ndarray, f: np.ndarray, q: float, n: int | None = None) -> float:
    """``||z||_q / ||f||_1``, the constant of the Helmholtz L^q-L^1 estimate.

    Admissible for ``1 <= q < n/(n-2)`` when ``n >= 3`` and any finite
    ``q >= 1`` otherwise.
    """
    n = grid.dim if n is None else n
    if not (q >= 1 and math.isfinite(q)):
        raise PreconditionError(f"q must be finite and >= 1, got {q}")
    if n >= 3 and not q < n / (n - 2):
        raise PreconditionError(f"q={q} outside [1, {n}/({n}-2)) for n={n}")
    f1 = grid.lp_norm(f, 1)
    if not f1 > 0:
        raise PreconditionError("||f||_1 must be positive")
    return grid.lp_norm(z, q) / f1


def exp_moment(grid: Grid, z: np.ndarray, A: float) -> float:
    """``∫ e^{Az}``; returns ``inf`` instead of overflowing once ``Az > 700``."""
    if not A > 0:
        raise PreconditionError(f"A must be positive, got {A}")
    az = A * np.asarray(z, dtype=float)
    if az.max() > EXP_OVERFLOW:
        return math.inf
    return float(np.exp(az).sum() * grid.cell_volume)
