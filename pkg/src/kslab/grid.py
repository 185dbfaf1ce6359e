"""Uniform cell-centred grids on boxes with homogeneous Neumann boundaries.

Fields are plain ``numpy`` arrays whose shape equals ``Grid.shape``.  Boundary
conditions are imposed by even reflection across each face, so the face flux
on the boundary is exactly zero and every discrete divergence sums to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import PreconditionError

MIN_EXTENT = 4


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise PreconditionError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.lengths) != self.dim:
            raise PreconditionError("extents and lengths need one entry per axis")
        if any(int(n) != n or n < MIN_EXTENT for n in self.extents):
            raise PreconditionError(f"every extent must be an integer >= {MIN_EXTENT}, got {self.extents}")
        if any(not (L > 0 and math.isfinite(L)) for L in self.lengths):
            raise PreconditionError(f"lengths must be positive and finite, got {self.lengths}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.extents)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.extents))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def measure(self) -> float:
        return math.prod(self.lengths)

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.extents[axis]) + 0.5) * h

    def mesh(self) -> list[np.ndarray]:
        """Cell-centre coordinate arrays, one per axis, each of ``shape``."""
        return np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return laplacian_neumann(self, f)

    def integrate(self, f: np.ndarray) -> float:
        return integrate(self, f)

    def lp_norm(self, f: np.ndarray, p: float) -> float:
        return lp_norm(self, f, p)

    @cached_property
    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``-Δ_h`` in the DCT-II basis, broadcast to ``shape``."""
        total = np.zeros(self.shape)
        for a, (n, h) in enumerate(zip(self.extents, self.spacing)):
            lam = (2.0 / h * np.sin(np.pi * np.arange(n) / (2 * n))) ** 2
            view = [1] * self.dim
            view[a] = n
            total = total + lam.reshape(view)
        return total

    @cached_property
    def neg_laplacian_matrix(self) -> sparse.csr_matrix:
        """Sparse ``-Δ_h`` acting on C-order flattened fields (symmetric, PSD)."""
        ops = []
        for n, h in zip(self.extents, self.spacing):
            main = np.full(n, 2.0)
            main[0] = main[-1] = 1.0
            off = -np.ones(n - 1)
            ops.append(sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h**2)
        eyes = [sparse.identity(n, format="csr") for n in self.extents]
        total = None
        for a in range(self.dim):
            factors = [ops[b] if b == a else eyes[b] for b in range(self.dim)]
            term = factors[0]
            for fac in factors[1:]:
                term = sparse.kron(term, fac, format="csr")
            total = term if total is None else total + term
        return total.tocsr()


def build_grid(dim: int, extents: int | Sequence[int], lengths: float | Sequence[float]) -> Grid:
    """Validate and build a :class:`Grid`; scalars are broadcast to every axis."""
    if dim not in (1, 2, 3):
        raise PreconditionError(f"dim must be 1, 2 or 3, got {dim}")
    if np.isscalar(extents):
        extents = [extents] * dim
    if np.isscalar(lengths):
        lengths = [lengths] * dim
    extents = list(extents)[:dim] if len(extents) > dim else list(extents)
    lengths = list(lengths)[:dim] if len(lengths) > dim else list(lengths)
    if len(extents) != dim or len(lengths) != dim:
        raise PreconditionError(f"need {dim} extents and lengths, got {extents} and {lengths}")
    if any(int(n) != n for n in extents):
        raise PreconditionError(f"extents must be integers, got {extents}")
    return Grid(dim, tuple(int(n) for n in extents), tuple(float(L) for L in lengths))


def _check(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise PreconditionError(f"field shape {f.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise PreconditionError("field contains non-finite values")
    return f


def laplacian_neumann(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second-order Neumann Laplacian in flux form.

    Interior face fluxes are centred differences; boundary face fluxes are
    zero (mirror ghosts), so ``integrate(grid, laplacian_neumann(grid, f))``
    telescopes to zero.
    """
    f = _check(grid, f)
    out = np.zeros_like(f)
    for a, h in enumerate(grid.spacing):
        flux = np.diff(f, axis=a) / h**2
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        out[tuple(lo)] += flux
        out[tuple(hi)] -= flux
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Midpoint rule: sum of cell values times cell volume."""
    f = _check(grid, f)
    return float(f.sum() * grid.cell_volume)


def lp_norm(grid: Grid, f: np.ndarray, p: float) -> float:
    if not (p == math.inf or p >= 1):
        raise PreconditionError(f"L^p norm needs p >= 1 or inf, got {p}")
    f = _check(grid, f)
    a = np.abs(f)
    if p == math.inf:
        return float(a.max())
    if p == 1:
        return float(a.sum() * grid.cell_volume)
    # rescale by the max to keep a**p from overflowing for large p
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * ((a / m) ** p).sum() ** (1.0 / p) * grid.cell_volume ** (1.0 / p))
