"""Parameterized circuits, POVM read-out and the per-sample expected loss.

A layered ansatz applies, for each layer, its fixed gate followed by the
ordered product of Pauli exponentials ``exp(i a_s sigma^s)``; the first
generator listed in a layer is applied first. Parameters are indexed
layer-major in generator order.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from ._kernels import pauli_tables
from .qcore import (
    PauliString,
    dagger,
    embed_operator,
    expm,
    is_unitary,
    ket_to_density,
    num_qubits_of,
    pauli_matrix,
)

LAYERED = "layered"
SINGLE_EXPONENTIAL = "single-exponential"


@dataclass(frozen=True, eq=False)
class Layer:
    """One layer: ``fixed`` (applied first, ``None`` means identity), then the generators."""

    generators: tuple[PauliString, ...]
    fixed: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if self.fixed is not None:
            fixed = np.asarray(self.fixed, dtype=complex)
            if not is_unitary(fixed, 1e-10):
                raise ValueError("fixed gate is not unitary to 1e-10")
            object.__setattr__(self, "fixed", fixed)


@dataclass(frozen=True, eq=False)
class AnsatzSpec:
    num_qubits: int
    layers: tuple[Layer, ...]
    form: str = LAYERED
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.form not in (LAYERED, SINGLE_EXPONENTIAL):
            raise ValueError(f"unknown ansatz form {self.form!r}")
        dim = 2**self.num_qubits
        for layer in self.layers:
            for g in layer.generators:
                if g.num_qubits != self.num_qubits:
                    raise ValueError(f"generator {g} does not act on {self.num_qubits} qubits")
                if abs(g.phase - 1) > 1e-12:
                    raise ValueError(f"generator {g} must carry phase +1")
            if layer.fixed is not None and layer.fixed.shape != (dim, dim):
                raise ValueError("fixed gate dimension mismatch")
        if self.form == SINGLE_EXPONENTIAL:
            if len(self.layers) != 1 or self.layers[0].fixed is not None:
                raise ValueError("single-exponential ansatz takes exactly one layer without a fixed gate")
            if len(set(g.letters for g in self.generators)) != self.num_params:
                raise ValueError("single-exponential ansatz needs distinct generator strings")

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @cached_property
    def generators(self) -> tuple[PauliString, ...]:
        return tuple(g for layer in self.layers for g in layer.generators)

    @property
    def num_params(self) -> int:
        return len(self.generators)

    @cached_property
    def param_layer(self) -> np.ndarray:
        """Layer index of every parameter."""
        return np.array([l for l, layer in enumerate(self.layers) for _ in layer.generators], dtype=int)

    @cached_property
    def pauli_mats(self) -> np.ndarray:
        """Dense generator matrices, shape ``(p, dim, dim)``."""
        if not self.generators:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack([pauli_matrix(g) for g in self.generators])

    @cached_property
    def pauli_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Flip masks and row phases of the generators (see ``_kernels``)."""
        return pauli_tables(self.pauli_mats)

    @cached_property
    def steps(self) -> tuple[tuple[str, Any], ...]:
        """Circuit steps in application order: ``("fixed", V)`` or ``("param", j)``."""
        out = []
        j = 0
        for layer in self.layers:
            if layer.fixed is not None:
                out.append(("fixed", layer.fixed))
            for _ in layer.generators:
                out.append(("param", j))
                j += 1
        return tuple(out)

    @cached_property
    def locality(self) -> int:
        """Largest generator weight (the ``k`` entering the convergence constants)."""
        return max((g.weight for g in self.generators), default=0)


def check_params(spec: AnsatzSpec, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} parameters, got shape {a.shape}")
    return a


def factor_matrices(spec: AnsatzSpec, a: np.ndarray) -> np.ndarray:
    """``exp(i a_j sigma_j)`` for every parameter, shape ``(p, dim, dim)``."""
    a = check_params(spec, a)
    eye = np.eye(spec.dim, dtype=complex)
    return np.cos(a)[:, None, None] * eye + 1j * np.sin(a)[:, None, None] * spec.pauli_mats


def unitary(spec: AnsatzSpec, a) -> np.ndarray:
    a = check_params(spec, a)
    if spec.form == SINGLE_EXPONENTIAL:
        return expm(1j * np.tensordot(a, spec.pauli_mats, axes=1))
    factors = factor_matrices(spec, a)
    u = np.eye(spec.dim, dtype=complex)
    for kind, item in spec.steps:
        u = (item if kind == "fixed" else factors[item]) @ u
    return u


def split_unitaries(spec: AnsatzSpec, a, param_index: int) -> tuple[np.ndarray, np.ndarray]:
    """``(U_leq, U_gt)`` around parameter ``param_index``.

    ``U_leq`` ends with that parameter's own exponential, so
    ``U_gt @ U_leq == unitary(spec, a)``.
    """
    if spec.form != LAYERED:
        raise ValueError("split_unitaries needs a layered ansatz; use the kappa expansion instead")
    a = check_params(spec, a)
    if not 0 <= param_index < spec.num_params:
        raise IndexError(f"parameter index {param_index} out of range")
    factors = factor_matrices(spec, a)
    u_leq = np.eye(spec.dim, dtype=complex)
    u_gt = np.eye(spec.dim, dtype=complex)
    before = True
    for kind, item in spec.steps:
        m = item if kind == "fixed" else factors[item]
        if before:
            u_leq = m @ u_leq
        else:
            u_gt = m @ u_gt
        if kind == "param" and item == param_index:
            before = False
    return u_leq, u_gt


# -- measurement and loss ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Povm:
    outcomes: tuple
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "operators", ops)
        if len(ops) != len(self.outcomes) or not ops:
            raise ValueError("need one operator per outcome")
        dim = ops[0].shape[0]
        for m in ops:
            if m.shape != (dim, dim):
                raise ValueError("POVM operators differ in shape")
            if np.max(np.abs(m - dagger(m))) > 1e-10 or np.linalg.eigvalsh(m)[0] < -1e-10:
                raise ValueError("POVM operator is not PSD to 1e-10")
        if np.max(np.abs(sum(ops) - np.eye(dim))) > 1e-10:
            raise ValueError("POVM operators do not sum to identity")

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @cached_property
    def stacked(self) -> np.ndarray:
        return np.stack(self.operators)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        """``tr(M_k rho)`` for every outcome (real part)."""
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state of shape {rho.shape} does not match POVM dimension {self.dim}")
        return np.einsum("kij,ji->k", self.stacked, rho).real

    def embed(self, qubits: Sequence[int], num_qubits: int) -> "Povm":
        """Same measurement acting on ``qubits`` of a larger register."""
        return Povm(self.outcomes, tuple(embed_operator(m, qubits, num_qubits) for m in self.operators))


@dataclass(frozen=True)
class LossFn:
    table: Mapping[tuple[Any, Any], float]

    def __call__(self, y, y_hat) -> float:
        return self.table[(y, y_hat)]

    @property
    def l_max(self) -> float:
        return max(self.table.values())


def zero_one_loss(labels: Iterable = (-1, 1)) -> LossFn:
    labels = tuple(labels)
    return LossFn({(y, yh): float(y != yh) for y in labels for yh in labels})


def loss_observable(povm: Povm, lossfn: LossFn, label) -> np.ndarray:
    """``sum_yhat loss(y, yhat) M_yhat``: the expected loss is ``tr(O rho_out)``."""
    return sum(lossfn(label, yh) * m for yh, m in zip(povm.outcomes, povm.operators))


def prepare_input(state: np.ndarray, num_qubits: int) -> np.ndarray:
    """Density matrix of ``state`` padded with ``|0>`` ancillas on the trailing qubits.

    Accepts kets (1-D) and density / shadow matrices (2-D).
    """
    state = np.asarray(state, dtype=complex)
    rho = ket_to_density(state) if state.ndim == 1 else state
    d_in = num_qubits_of(rho)
    if d_in > num_qubits:
        raise ValueError(f"{d_in}-qubit input does not fit a {num_qubits}-qubit circuit")
    if d_in < num_qubits:
        anc = np.zeros((2 ** (num_qubits - d_in),) * 2, dtype=complex)
        anc[0, 0] = 1
        rho = np.kron(rho, anc)
    return rho


def output_state(spec: AnsatzSpec, a, state: np.ndarray) -> np.ndarray:
    u = unitary(spec, a)
    return u @ prepare_input(state, spec.num_qubits) @ dagger(u)


def expected_loss(spec: AnsatzSpec, a, state: np.ndarray, label, povm: Povm, lossfn: LossFn) -> float:
    """``sum_yhat loss(y, yhat) tr(M_yhat U rho U^dagger)`` for any Hermitian input."""
    rho_out = output_state(spec, a, state)
    if povm.dim != rho_out.shape[0]:
        raise ValueError(f"POVM dimension {povm.dim} does not match system dimension {rho_out.shape[0]}")
    probs = povm.probabilities(rho_out)
    return float(sum(lossfn(label, yh) * p for yh, p in zip(povm.outcomes, probs)))


def loss(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn) -> float:
    return expected_loss(spec, a, sample.state, sample.label, povm, lossfn)


def draw_outcome(probs: np.ndarray, outcomes: Sequence, rng: np.random.Generator):
    """Born-rule draw from a probability vector, tolerating tiny rounding residue."""
    if np.min(probs) < -1e-9:
        raise ValueError(f"negative outcome probability {np.min(probs):.3e}")
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1) > 1e-9:
        raise ValueError(f"outcome probabilities sum to {total}")
    k = int(np.searchsorted(np.cumsum(probs / total), rng.random(), side="right"))
    return outcomes[min(k, len(outcomes) - 1)]


def sample_outcome(spec: AnsatzSpec, a, state: np.ndarray, povm: Povm, rng: np.random.Generator):
    return draw_outcome(povm.probabilities(output_state(spec, a, state)), povm.outcomes, rng)


# -- batched evaluation -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InputBatch:
    """Circuit-ready density matrices with their labels, stacked for vectorized evaluation."""

    rhos: np.ndarray
    labels: np.ndarray
    label_means: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples: Sequence, num_qubits: int) -> "InputBatch":
        if not samples:
            raise ValueError("empty batch")
        rhos = np.stack([prepare_input(s.state, num_qubits) for s in samples])
        labels = np.array([s.label for s in samples])
        means = {y: (float(np.mean(labels == y)), rhos[labels == y].mean(axis=0)) for y in np.unique(labels)}
        return cls(rhos, labels, means)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Evaluation:
    loss: float
    accuracy: float
    born_accuracy: float


def evaluate(spec: AnsatzSpec, a, batch: InputBatch, povm: Povm, lossfn: LossFn) -> Evaluation:
    """Exact mean loss, argmax-decision accuracy and Born (single-shot) accuracy."""
    u = unitary(spec, a)
    heis = np.stack([dagger(u) @ m @ u for m in povm.operators])
    probs = np.einsum("kij,nji->nk", heis, batch.rhos).real
    outcomes = np.array(povm.outcomes)
    loss_table = np.array([[lossfn(y, yh) for yh in povm.outcomes] for y in batch.labels])
    mean_loss = float(np.mean(np.sum(loss_table * probs, axis=1)))
    predicted = outcomes[np.argmax(probs, axis=1)]
    accuracy = float(np.mean(predicted == batch.labels))
    correct = outcomes[None, :] == batch.labels[:, None]
    born = float(np.mean(np.sum(probs * correct, axis=1)))
    return Evaluation(mean_loss, accuracy, born)
