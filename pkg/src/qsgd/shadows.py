"""Classical shadows from random single-qubit Pauli-basis measurements.

Each qubit is measured in a basis chosen uniformly from the three rotations
``V in {I, H, S^dagger H}`` (``S = diag(1, i)``): the outcome ``b`` selects the
eigenket ``omega = V|b>``, which ranges over ``|0>, |1>, |+>, |->, |-i>, |+i>``.
The single-qubit shadow factor is ``3|omega><omega| - I`` and a snapshot's
shadow is the tensor product of its factors.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ansatz import prepare_input
from .qcore import dagger, is_hermitian, kron, num_qubits_of

Z_BASIS, X_BASIS, Y_BASIS = 0, 1, 2

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j])
BASIS_ROTATIONS = (np.eye(2, dtype=complex), _H, dagger(_S) @ _H)
# OMEGA[v][b] = V_v |b>
OMEGA = tuple(tuple(v[:, b].copy() for b in (0, 1)) for v in BASIS_ROTATIONS)


def gamma0(b: np.ndarray) -> np.ndarray:
    """Single-qubit measure-and-prepare channel averaged over the three bases."""
    out = np.zeros((2, 2), dtype=complex)
    for v in BASIS_ROTATIONS:
        for bit in (0, 1):
            w = v[:, bit]
            out += (w.conj() @ b @ w) * np.outer(w, w.conj())
    return out / 3


def gamma0_inv_pure(omega: np.ndarray) -> np.ndarray:
    """Inverse channel on a pure state: ``3|omega><omega| - I``."""
    omega = np.asarray(omega, dtype=complex)
    return 3 * np.outer(omega, omega.conj()) - np.eye(2)


@dataclass(frozen=True)
class ShadowSnapshot:
    """Basis choice (0=Z, 1=X, 2=Y) and measured bit for every qubit."""

    bases: tuple[int, ...]
    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(int(v) for v in self.bases))
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if len(self.bases) != len(self.bits):
            raise ValueError("bases and bits differ in length")
        if any(v not in (0, 1, 2) for v in self.bases) or any(b not in (0, 1) for b in self.bits):
            raise ValueError("invalid basis or bit value")

    @property
    def num_qubits(self) -> int:
        return len(self.bits)

    def to_bytes(self) -> tuple[bytes, bytes]:
        return bytes(self.bases), bytes(self.bits)

    @classmethod
    def from_bytes(cls, bases: bytes, bits: bytes) -> "ShadowSnapshot":
        return cls(tuple(bases), tuple(bits))


@dataclass(frozen=True, eq=False)
class ShadowMatrix:
    """A shadow stored as its single-qubit factors; ``dense`` realizes the tensor product."""

    factors: np.ndarray

    @cached_property
    def dense(self) -> np.ndarray:
        return kron(*self.factors)

    @property
    def num_qubits(self) -> int:
        return len(self.factors)


def _rotation(bases: Sequence[int]) -> np.ndarray:
    """``(tensor_j V_j)^dagger``: maps the chosen eigenbasis onto the computational basis."""
    return kron(*(dagger(BASIS_ROTATIONS[v]) for v in bases))


def outcome_distribution(state: np.ndarray, bases: Sequence[int]) -> np.ndarray:
    """Exact joint Born distribution of the bit string for fixed basis choices."""
    rho = prepare_input(state, num_qubits_of(np.asarray(state)))
    w = _rotation(bases)
    probs = np.einsum("ij,jk,ik->i", w, rho, w.conj()).real
    return np.clip(probs, 0.0, None)


def _bits_of(index: int, d: int) -> tuple[int, ...]:
    return tuple((index >> (d - 1 - j)) & 1 for j in range(d))


def sample_snapshot(state: np.ndarray, rng: np.random.Generator, bases: Sequence[int] | None = None) -> ShadowSnapshot:
    """Random bases (unless forced), then one joint computational-basis measurement."""
    d = num_qubits_of(np.asarray(state))
    if bases is None:
        bases = tuple(rng.integers(0, 3, size=d))
    probs = outcome_distribution(state, bases)
    probs = probs / probs.sum()
    index = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return ShadowSnapshot(bases, _bits_of(min(index, len(probs) - 1), d))


def shadow_matrix(snap: ShadowSnapshot) -> ShadowMatrix:
    factors = np.stack([gamma0_inv_pure(OMEGA[v][b]) for v, b in zip(snap.bases, snap.bits)])
    return ShadowMatrix(factors)


def local_shadow(snap: ShadowSnapshot, qubits: Sequence[int]) -> np.ndarray:
    """Tensor product of the shadow factors on ``qubits`` (in the given order)."""
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits) or any(q < 0 or q >= snap.num_qubits for q in qubits):
        raise ValueError(f"bad qubit list {qubits} for a {snap.num_qubits}-qubit snapshot")
    factors = shadow_matrix(snap).factors
    return kron(*(factors[q] for q in qubits))


def trace_with_factors(op: np.ndarray, factors: np.ndarray) -> complex:
    """``tr(op @ kron(*factors))`` contracted qubit by qubit, without densifying."""
    k = len(factors)
    t = np.asarray(op).reshape((2,) * (2 * k))
    # t[i_0..i_{k-1}, j_0..j_{k-1}] f_q[j_q, i_q]: contract qubit 0 each round
    for f in factors:
        rest = t.ndim // 2 - 1
        t = np.tensordot(t, f, axes=([0, rest + 1], [1, 0]))
    return complex(t)


def estimate_observable(snaps: Sequence[ShadowSnapshot], m: np.ndarray, support: Sequence[int]) -> float:
    """Empirical mean of ``tr(M rho_hat^k)`` over snapshots, with ``M`` given on ``support``."""
    support = list(support)
    if not snaps:
        raise ValueError("no snapshots")
    if len(support) > snaps[0].num_qubits:
        raise ValueError("observable support larger than the system")
    if not is_hermitian(m, 1e-10):
        raise ValueError("observable must be Hermitian")
    total = 0j
    for snap in snaps:
        factors = shadow_matrix(snap).factors
        total += trace_with_factors(m, factors[support])
    value = total / len(snaps)
    if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
        raise ArithmeticError(f"estimate has imaginary part {value.imag:.3e}")
    return float(value.real)


def snapshot_distribution(state: np.ndarray, max_qubits: int = 3) -> list[tuple[ShadowSnapshot, float]]:
    """Every snapshot with its exact probability (zero-probability outcomes dropped)."""
    d = num_qubits_of(np.asarray(state))
    if d > max_qubits:
        raise ValueError(f"exhaustive enumeration limited to {max_qubits} qubits, got {d}")
    out = []
    for bases in itertools.product(range(3), repeat=d):
        probs = outcome_distribution(state, bases)
        for index, p in enumerate(probs):
            if p > 0:
                out.append((ShadowSnapshot(bases, _bits_of(index, d)), p / 3**d))
    return out


def brute_force_expectation(state: np.ndarray, f: Callable[[ShadowSnapshot], object], max_qubits: int = 3):
    """Exact expectation of ``f(snapshot)`` over bases and Born outcomes."""
    total = None
    for snap, w in snapshot_distribution(state, max_qubits):
        term = w * np.asarray(f(snap))
        total = term if total is None else total + term
    return total


def brute_force_variance(state: np.ndarray, f: Callable[[ShadowSnapshot], float], max_qubits: int = 3) -> float:
    """Exact single-snapshot variance of a real-valued ``f``."""
    dist = snapshot_distribution(state, max_qubits)
    vals = np.array([float(np.real(f(s))) for s, _ in dist])
    ws = np.array([w for _, w in dist])
    mean = np.sum(ws * vals)
    return float(np.sum(ws * (vals - mean) ** 2))
