"""Seeded generators for the three binary state-classification experiments.

* ``exp1``: ``phi_u = sqrt(1-u^2)|00> + u|10>`` (label -1) against
  ``phi_{+-v} = +-sqrt(1-v^2)|01> + v|10>`` (label +1), ``u, v ~ U[0, 1]``.
* ``exp2``: product of two random single-qubit density matrices (label -1)
  against an entangled pure state (label +1).
* ``exp3``: product of four random single-qubit density matrices (label -1)
  against the 4-qubit GHZ state (label +1).

Pure states are kets and mixed states density matrices; the circuit pads
either with ``|0>`` ancillas on the trailing qubits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ansatz import AnsatzSpec, Layer, Povm
from .qcore import PauliString, all_pauli_strings, is_hermitian, kron, ket_to_density, num_qubits_of

EXPERIMENTS = ("exp1", "exp2", "exp2-bell", "exp3")
EXP2_VARIANTS = ("as-written", "bell")

MAGIC = b"QSGDDATA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHHI")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    state: np.ndarray
    label: int

    def __post_init__(self):
        state = np.asarray(self.state, dtype=complex)
        object.__setattr__(self, "state", state)
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        check_physical(state)

    @property
    def num_qubits(self) -> int:
        return num_qubits_of(self.state)

    def density(self) -> np.ndarray:
        return ket_to_density(self.state) if self.state.ndim == 1 else self.state


def check_physical(state: np.ndarray, tol: float = 1e-10) -> None:
    if state.ndim == 1:
        if abs(np.linalg.norm(state) - 1) > tol:
            raise ValueError("ket is not normalized")
        return
    if not is_hermitian(state, tol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(state) - 1) > tol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(state)[0] < -tol:
        raise ValueError("density matrix is not PSD")


def ginibre(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """Random density matrix ``G G^dagger / tr(G G^dagger)`` with complex standard-normal ``G``."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def _ket(amps: dict[int, float], dim: int) -> np.ndarray:
    out = np.zeros(dim, dtype=complex)
    for index, amp in amps.items():
        out[index] = amp
    return out


def phi_u(u: float) -> np.ndarray:
    return _ket({0b00: np.sqrt(1 - u * u), 0b10: u}, 4)


def phi_v(v: float, sign: int) -> np.ndarray:
    return _ket({0b01: sign * np.sqrt(1 - v * v), 0b10: v}, 4)


BELL = _ket({0b00: 1 / np.sqrt(2), 0b11: 1 / np.sqrt(2)}, 4)
# the literal state 1/4(|00>+|01>+|10>+|11>) normalized, i.e. |+>|+>
PLUS_PLUS = np.full(4, 0.5, dtype=complex)
GHZ4 = _ket({0b0000: 1 / np.sqrt(2), 0b1111: 1 / np.sqrt(2)}, 16)


def gen_exp1(n: int, rng: np.random.Generator) -> list[LabeledSample]:
    out = []
    for _ in range(n):
        kind = int(rng.integers(3))
        u = float(rng.random())
        if kind == 0:
            out.append(LabeledSample(phi_u(u), -1))
        else:
            out.append(LabeledSample(phi_v(u, 1 if kind == 1 else -1), 1))
    return out


def gen_exp2(n: int, rng: np.random.Generator, variant: str = "bell") -> list[LabeledSample]:
    if variant not in EXP2_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {EXP2_VARIANTS}")
    target = BELL if variant == "bell" else PLUS_PLUS
    out = []
    for _ in range(n):
        if rng.random() < 0.5:
            out.append(LabeledSample(np.kron(ginibre(rng), ginibre(rng)), -1))
        else:
            out.append(LabeledSample(target, 1))
    return out


def gen_exp3(n: int, rng: np.random.Generator) -> list[LabeledSample]:
    out = []
    for _ in range(n):
        if rng.random() < 0.5:
            out.append(LabeledSample(kron(*(ginibre(rng) for _ in range(4))), -1))
        else:
            out.append(LabeledSample(GHZ4, 1))
    return out


# -- experiment wiring ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    id: str
    num_qubits: int
    data_qubits: int
    ansatz: AnsatzSpec
    povm: Povm
    budget: int

    def __post_init__(self):
        if self.povm.dim != 2**self.num_qubits or self.ansatz.num_qubits != self.num_qubits:
            raise ValueError("POVM, ansatz and register sizes disagree")

    def generate(self, n: int, rng: np.random.Generator) -> list[LabeledSample]:
        if self.id == "exp1":
            return gen_exp1(n, rng)
        if self.id == "exp2":
            return gen_exp2(n, rng, "as-written")
        if self.id == "exp2-bell":
            return gen_exp2(n, rng, "bell")
        return gen_exp3(n, rng)


def parity_povm(num_qubits: int) -> Povm:
    """Outcome -1 on ``|0..0>`` and ``|1..1>``, +1 on every other basis state."""
    minus = np.zeros((2**num_qubits,) * 2, dtype=complex)
    minus[0, 0] = minus[-1, -1] = 1
    return Povm((-1, 1), (minus, np.eye(2**num_qubits) - minus))


def perceptron(pair: tuple[int, int], num_qubits: int) -> Layer:
    """All 16 Pauli strings on a qubit pair, as ordered exponentials."""
    gens = []
    for s in all_pauli_strings(2):
        letters = [0] * num_qubits
        letters[pair[0]], letters[pair[1]] = s.letters
        gens.append(PauliString(tuple(letters)))
    return Layer(tuple(gens))


def experiment_spec(exp_id: str) -> ExperimentSpec:
    if exp_id in ("exp1", "exp2", "exp2-bell"):
        ansatz = AnsatzSpec(4, tuple(perceptron(pair, 4) for pair in ((0, 1), (1, 2), (2, 3))), name=exp_id)
        return ExperimentSpec(exp_id, 4, 2, ansatz, parity_povm(2).embed([2, 3], 4), 57600)
    if exp_id == "exp3":
        ansatz = AnsatzSpec(4, (Layer(tuple(all_pauli_strings(4))),), name=exp_id)
        return ExperimentSpec(exp_id, 4, 4, ansatz, parity_povm(4), 61440)
    raise ValueError(f"unknown experiment {exp_id!r}; choose from {EXPERIMENTS}")


# -- binary dumps ----------------------------------------------------------------


def dump_samples(path: str | Path, samples: list[LabeledSample]) -> None:
    """Write density matrices (row-major, interleaved re/im f64) and i8 labels."""
    if not samples:
        raise ValueError("nothing to dump")
    d = samples[0].num_qubits
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, d, len(samples))]
    for s in samples:
        if s.num_qubits != d:
            raise ValueError("samples differ in qubit count")
        rho = np.ascontiguousarray(s.density(), dtype="<c16")
        chunks.append(rho.tobytes())
        chunks.append(struct.pack("<b", s.label))
    Path(path).write_bytes(b"".join(chunks))


def load_samples(path: str | Path) -> list[LabeledSample]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, d, count = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise ValueError("not a sample dump of a supported version")
    dim = 2**d
    rec = 16 * dim * dim + 1
    if len(raw) != _HEADER.size + count * rec:
        raise ValueError("dump size does not match its header")
    out = []
    for i in range(count):
        off = _HEADER.size + i * rec
        rho = np.frombuffer(raw, dtype="<c16", count=dim * dim, offset=off).reshape(dim, dim).copy()
        (label,) = struct.unpack_from("<b", raw, off + rec - 1)
        out.append(LabeledSample(rho, label))
    return out
