"""Compiled commutator-gradient sweep for ansatze made only of Pauli exponentials.

A Pauli string is a phased permutation: ``sigma[r, r ^ x] = ph[r]``. Each
conjugation by ``cos(a) I + i sin(a) sigma`` therefore costs ``O(dim^2)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def pauli_tables(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip masks ``x[j]`` and row phases ``ph[j, r]`` of stacked Pauli matrices."""
    p, dim, _ = mats.shape
    rows = np.arange(dim)
    xs = np.array([int(np.flatnonzero(m[0])[0]) for m in mats], dtype=np.int64)
    phs = np.array([m[rows, rows ^ x] for m, x in zip(mats, xs)], dtype=np.complex128).reshape(p, dim)
    return xs, phs


@njit(cache=True)
def _conjugate(a, x, ph, c, s, sign):
    # sign=+1: E a E^dagger; sign=-1: E^dagger a E, with E = c I + i s sigma
    n = a.shape[0]
    out = np.empty_like(a)
    for r in range(n):
        rx = r ^ x
        for col in range(n):
            cx = col ^ x
            sas = ph[r] * a[rx, cx] * ph[cx]
            comm = ph[r] * a[rx, col] - a[r, cx] * ph[cx]
            out[r, col] = c * c * a[r, col] + s * s * sas + sign * 1j * c * s * comm
    return out


@njit(cache=True)
def pauli_sweep_gradient(rho, obs, xs, phs, a):
    """``i tr(O_j [sigma_j, rho_j])`` for every parameter (complex, for residue checks)."""
    p = a.shape[0]
    n = rho.shape[0]
    rhos = np.empty((p, n, n), dtype=np.complex128)
    cur = rho.copy()
    for j in range(p):
        cur = _conjugate(cur, xs[j], phs[j], np.cos(a[j]), np.sin(a[j]), 1.0)
        rhos[j] = cur
    out = np.empty(p, dtype=np.complex128)
    o = obs.copy()
    for j in range(p - 1, -1, -1):
        x = xs[j]
        ph = phs[j]
        rj = rhos[j]
        acc = 0j
        for r in range(n):
            for col in range(n):
                comm = ph[col] * rj[col ^ x, r] - rj[col, r ^ x] * ph[r ^ x]
                acc += o[r, col] * comm
        out[j] = 1j * acc
        o = _conjugate(o, x, ph, np.cos(a[j]), np.sin(a[j]), -1.0)
    return out
