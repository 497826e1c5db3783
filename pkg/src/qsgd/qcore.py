"""Dense linear algebra and Pauli-string algebra for small qubit systems.

Conventions used throughout the package:

* Pauli letters are encoded as integers ``0=I, 1=X, 2=Y, 3=Z``.
* Qubit 0 is the most significant bit of a computational-basis index, so
  ``kron(A_0, A_1, ..., A_{d-1})`` places ``A_0`` on qubit 0.
* Matrices are plain ``numpy`` complex arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg

MAX_DENSE_QUBITS = 12

_PHASES = (1, 1j, -1, -1j)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)
_LETTERS = "IXYZ"


def _phase_index(phase: complex) -> int:
    for k, ph in enumerate(_PHASES):
        if abs(phase - ph) < 1e-12:
            return k
    raise ValueError(f"phase must be a fourth root of unity, got {phase!r}")


@dataclass(frozen=True)
class PauliString:
    """A signed Pauli string ``phase * sigma^{letters}``."""

    letters: tuple[int, ...]
    phase: complex = 1

    def __post_init__(self):
        letters = tuple(int(s) for s in self.letters)
        if any(s not in (0, 1, 2, 3) for s in letters):
            raise ValueError(f"Pauli letters must be in {{0,1,2,3}}, got {letters}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "phase", complex(_PHASES[_phase_index(self.phase)]))

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels such as ``"XZ"``, ``"-iYI"`` or ``"+ZZ"``."""
        label = label.strip()
        phase: complex = 1
        for prefix, ph in (("-i", -1j), ("+i", 1j), ("i", 1j), ("-", -1), ("+", 1)):
            if label.startswith(prefix):
                phase = ph
                label = label[len(prefix):]
                break
        try:
            letters = tuple(_LETTERS.index(c) for c in label.upper())
        except ValueError:
            raise ValueError(f"invalid Pauli label {label!r}") from None
        return cls(letters, phase)

    @property
    def num_qubits(self) -> int:
        return len(self.letters)

    @property
    def label(self) -> str:
        prefix = {1: "", 1j: "i", -1: "-", -1j: "-i"}[_PHASES[_phase_index(self.phase)]]
        return prefix + "".join(_LETTERS[s] for s in self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        """Qubits on which the string acts non-trivially."""
        return tuple(j for j, s in enumerate(self.letters) if s)

    @property
    def weight(self) -> int:
        return len(self.support)

    def unsigned(self) -> "PauliString":
        return PauliString(self.letters, 1)

    def __str__(self) -> str:
        return self.label


def all_pauli_strings(num_qubits: int) -> list[PauliString]:
    """Every unsigned Pauli string on ``num_qubits`` qubits, in lexicographic order."""
    return [PauliString(np.unravel_index(k, (4,) * num_qubits)) for k in range(4**num_qubits)]


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Dense matrix of ``p``, built directly as a phased permutation matrix."""
    d = p.num_qubits
    if d > MAX_DENSE_QUBITS:
        raise ValueError(f"{d} qubits exceeds the dense bound of {MAX_DENSE_QUBITS}")
    dim = 2**d
    cols = np.arange(dim)
    rows = cols.copy()
    vals = np.full(dim, p.phase, dtype=complex)
    for j, s in enumerate(p.letters):
        shift = d - 1 - j
        bit = (cols >> shift) & 1
        if s in (1, 2):
            rows ^= 1 << shift
        if s == 2:
            # Y|b> = i (-1)^b |1-b>
            vals *= 1j * (1 - 2 * bit)
        elif s == 3:
            vals *= 1 - 2 * bit
    out = np.zeros((dim, dim), dtype=complex)
    out[rows, cols] = vals
    return out


def _letter_product(a: int, b: int) -> tuple[complex, int]:
    if a == 0:
        return 1, b
    if b == 0:
        return 1, a
    if a == b:
        return 1, 0
    # XY = iZ, YZ = iX, ZX = iY; reversed order flips the sign
    return (1j if (b - a) % 3 == 1 else -1j), a ^ b


def pauli_product(r: PauliString, s: PauliString) -> PauliString:
    """Return ``t`` with ``sigma^r sigma^s = t`` (phase carried in ``t.phase``).

    This is the sparse form of the structure constants: ``kappa[r, s, t]``
    equals the returned phase for the returned letters and vanishes otherwise.
    """
    if r.num_qubits != s.num_qubits:
        raise ValueError(f"length mismatch: {r.num_qubits} vs {s.num_qubits}")
    phase = r.phase * s.phase
    letters = []
    for a, b in zip(r.letters, s.letters):
        ph, c = _letter_product(a, b)
        phase *= ph
        letters.append(c)
    return PauliString(tuple(letters), phase)


def structure_constant(r: PauliString, s: PauliString, t: PauliString) -> complex:
    """``kappa_{rst}`` for unsigned strings ``r, s, t``."""
    prod = pauli_product(r.unsigned(), s.unsigned())
    return prod.phase if prod.letters == t.letters else 0j


def pauli_exp(p: PauliString, angle: float) -> np.ndarray:
    """``exp(i * angle * sigma^p) = cos(angle) I + i sin(angle) sigma^p``."""
    if abs(p.phase - 1) > 1e-12:
        raise ValueError(f"pauli_exp needs a +1 phase, got {p.label}")
    dim = 2**p.num_qubits
    return np.cos(angle) * np.eye(dim, dtype=complex) + 1j * np.sin(angle) * pauli_matrix(p)


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    return scipy.linalg.expm(np.asarray(a, dtype=complex))


# -- generic dense helpers ---------------------------------------------------


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def kron(*mats: np.ndarray) -> np.ndarray:
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


def num_qubits_of(a: np.ndarray) -> int:
    dim = a.shape[0]
    d = dim.bit_length() - 1
    if dim < 1 or 2**d != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return d


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dagger(a)), initial=0.0) <= tol


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    return np.max(np.abs(u @ dagger(u) - np.eye(u.shape[0]))) <= tol


def ket_to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def basis_ket(index: int, dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1
    return psi


def partial_trace(rho: np.ndarray, trace_out: list[int] | tuple[int, ...]) -> np.ndarray:
    """Trace out the given qubits; the kept qubits stay in their original order."""
    d = num_qubits_of(rho)
    trace_out = sorted(set(trace_out))
    if any(q < 0 or q >= d for q in trace_out):
        raise ValueError(f"qubit indices {trace_out} out of range for {d} qubits")
    keep = [q for q in range(d) if q not in trace_out]
    t = rho.reshape((2,) * (2 * d))
    # move traced row/col axes to the back, then contract them pairwise
    row_axes = keep + trace_out
    col_axes = [d + q for q in keep] + [d + q for q in trace_out]
    t = t.transpose(row_axes + col_axes)
    k, m = 2 ** len(keep), 2 ** len(trace_out)
    t = t.reshape(k, m, k, m)
    return np.einsum("ajbj->ab", t)


def embed_operator(op: np.ndarray, qubits: list[int] | tuple[int, ...], num_qubits: int) -> np.ndarray:
    """Place ``op`` (acting on ``qubits``, in that order) inside ``num_qubits`` qubits."""
    k = len(qubits)
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator shape {op.shape} does not match {k} qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= num_qubits for q in qubits):
        raise ValueError(f"bad qubit list {qubits} for {num_qubits} qubits")
    rest = [q for q in range(num_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    # axes of `full` are ordered (qubits..., rest...); permute back to 0..d-1
    order = list(qubits) + rest
    perm = np.argsort(order)
    t = full.reshape((2,) * (2 * num_qubits))
    t = t.transpose(list(perm) + [num_qubits + i for i in perm])
    return t.reshape(2**num_qubits, 2**num_qubits)


# -- Hermitian eigenvalues ---------------------------------------------------


def _jacobi_rotation(app: float, aqq: float, apq: complex) -> np.ndarray:
    """2x2 unitary G with G^dagger [[app, apq], [apq*, aqq]] G diagonal."""
    mag = abs(apq)
    phase = apq / mag
    theta = (aqq - app) / (2.0 * mag)
    if theta == 0:
        t = 1.0
    elif abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    # phase-fix the off-diagonal to be real, then a real Jacobi rotation
    return np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as columns. Sweeps stop once the
    off-diagonal Frobenius norm drops below ``tol`` (scaled by the matrix
    norm when that exceeds one).
    """
    a = np.array(a, dtype=complex)
    if not is_hermitian(a, 1e-10):
        raise ValueError("jacobi_eigh requires a Hermitian matrix")
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    threshold = tol * max(1.0, np.linalg.norm(a))
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a[offdiag])
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                g = _jacobi_rotation(a[p, p].real, a[q, q].real, a[p, q])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = dagger(g) @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    else:
        off = np.linalg.norm(a[offdiag])
        if off > threshold:
            raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")
    w = np.diag(a).real
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def hermitian_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix, descending."""
    return jacobi_eigh(a)[0]


def trace_norm(a: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    return float(np.sum(np.abs(hermitian_eigenvalues(a))))
