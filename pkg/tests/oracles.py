"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np


def dense_neg_laplacian(shape, lengths) -> np.ndarray:
    """-Δ_h for cell-centred Neumann grids, assembled cell by cell with explicit loops."""
    shape = tuple(shape)
    h = [L / n for L, n in zip(lengths, shape)]
    N = math.prod(shape)
    A = np.zeros((N, N))
    for idx in np.ndindex(*shape):
        i = np.ravel_multi_index(idx, shape)
        for a in range(len(shape)):
            for step in (-1, 1):
                nb = list(idx)
                nb[a] += step
                if 0 <= nb[a] < shape[a]:
                    j = np.ravel_multi_index(tuple(nb), shape)
                    A[i, i] += 1 / h[a] ** 2
                    A[i, j] -= 1 / h[a] ** 2
    return A


def dense_helmholtz_inverse(shape, lengths, shift: float = 1.0) -> np.ndarray:
    A = dense_neg_laplacian(shape, lengths) + shift * np.eye(math.prod(shape))
    return np.linalg.inv(A)


def explicit_euler_step(u, v, dt, sub, shape, lengths, gamma, eps):
    """Brute-force sub-stepped explicit integrator for the semi-discrete system.

    For eps == 0, v is recomputed from u by a dense solve after every
    sub-step; otherwise eps v_t = Δv - v + u is integrated explicitly.
    """
    L = dense_neg_laplacian(shape, lengths)
    Hinv = np.linalg.inv(L + np.eye(L.shape[0]))
    u = u.ravel().copy()
    v = v.ravel().copy()
    tau = dt / sub
    for _ in range(sub):
        if eps == 0:
            v = Hinv @ u
            u = u - tau * (L @ (gamma(v) * u))
        else:
            u_new = u - tau * (L @ (gamma(v) * u))
            v = v + tau / eps * (-(L @ v) - v + u)
            u = u_new
    if eps == 0:
        v = Hinv @ u
    return u.reshape(shape), v.reshape(shape)
