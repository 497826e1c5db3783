"""Gradient engines for layered Pauli-exponential ansatze.

Every engine estimates the derivative of the per-sample expected loss
``L(a) = sum_yhat loss(y, yhat) tr(M_yhat U(a) rho U(a)^dagger)``:

* ``exact_gradient``: commutator formula ``i tr(O_j [sigma_j, rho_j])`` where
  ``rho_j`` is the state right after parameter ``j``'s exponential and ``O_j``
  the loss observable pulled back through the rest of the circuit.
* ``hadamard_test_sample``: one shot of the ancilla-assisted derivative circuit.
* ``psr_gradient``: parameter-shift rule with one-shot loss measurements.
* ``rqsgd_estimate``: one Hadamard-test shot on a random coordinate.
* ``qsgd_gradient``: the commutator formula evaluated on one classical shadow.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from ._kernels import pauli_sweep_gradient
from .ansatz import (
    LAYERED,
    AnsatzSpec,
    LossFn,
    Povm,
    check_params,
    draw_outcome,
    expected_loss,
    factor_matrices,
    loss_observable,
    prepare_input,
    split_unitaries,
)
from .qcore import PauliString, dagger, pauli_exp, pauli_matrix, pauli_product
from .shadows import ShadowSnapshot, sample_snapshot, shadow_matrix, trace_with_factors

QUARTER_PI = np.pi / 4


@dataclass(frozen=True)
class GradEstimate:
    values: np.ndarray
    samples_consumed: int
    method: str


def _require_layered(spec: AnsatzSpec) -> None:
    if spec.form != LAYERED:
        raise ValueError("this gradient engine needs a layered ansatz")


def loss_is_constant(povm: Povm, lossfn: LossFn, label) -> bool:
    """True when the loss does not depend on the outcome, so every derivative is exactly zero."""
    return len({lossfn(label, yh) for yh in povm.outcomes}) == 1


def _sweep(spec: AnsatzSpec, a: np.ndarray, rho_in: np.ndarray, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """States after each parameter's exponential and observables pulled back to that point."""
    factors = factor_matrices(spec, a)
    p, dim = spec.num_params, spec.dim
    rhos = np.empty((p, dim, dim), dtype=complex)
    obss = np.empty((p, dim, dim), dtype=complex)
    rho = rho_in
    for kind, item in spec.steps:
        m = item if kind == "fixed" else factors[item]
        rho = m @ rho @ dagger(m)
        if kind == "param":
            rhos[item] = rho
    o = obs
    for kind, item in reversed(spec.steps):
        if kind == "param":
            obss[item] = o
        m = item if kind == "fixed" else factors[item]
        o = dagger(m) @ o @ m
    return rhos, obss


def commutator_gradient(spec: AnsatzSpec, a, rho_in: np.ndarray, obs: np.ndarray, engine: str = "auto") -> np.ndarray:
    """``i tr(O_j [sigma_j, rho_j])`` for every parameter, for any Hermitian input ``rho_in``.

    ``engine="pauli"`` runs the compiled permutation sweep (no fixed gates
    allowed), ``"dense"`` the matrix-product sweep; ``"auto"`` picks the
    compiled one whenever it applies.
    """
    _require_layered(spec)
    a = check_params(spec, a)
    if spec.num_params == 0:
        return np.zeros(0)
    if engine == "auto":
        engine = "dense" if any(kind == "fixed" for kind, _ in spec.steps) else "pauli"
    if engine == "pauli":
        if any(kind == "fixed" for kind, _ in spec.steps):
            raise ValueError("the Pauli sweep does not support fixed gates")
        xs, phs = spec.pauli_tables
        vals = pauli_sweep_gradient(
            np.ascontiguousarray(rho_in, dtype=complex), np.ascontiguousarray(obs, dtype=complex), xs, phs, a
        )
    elif engine == "dense":
        rhos, obss = _sweep(spec, a, rho_in, obs)
        sig = spec.pauli_mats
        comm = obss @ sig - sig @ obss
        vals = 1j * np.einsum("pij,pji->p", comm, rhos)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(vals.imag)) > 1e-10 * scale:
        raise ArithmeticError(f"gradient has imaginary residue {np.max(np.abs(vals.imag)):.3e}")
    return vals.real


def exact_gradient(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn) -> GradEstimate:
    if loss_is_constant(povm, lossfn, sample.label):
        return GradEstimate(np.zeros(spec.num_params), 0, "exact")
    rho = prepare_input(sample.state, spec.num_qubits)
    obs = loss_observable(povm, lossfn, sample.label)
    return GradEstimate(commutator_gradient(spec, a, rho, obs), 0, "exact")


def batch_exact_gradient(spec: AnsatzSpec, a, batch, povm: Povm, lossfn: LossFn) -> np.ndarray:
    """Exact gradient of the batch-mean loss, using linearity in the input state per label."""
    total = np.zeros(spec.num_params)
    for label, (weight, rho_mean) in batch.label_means.items():
        if loss_is_constant(povm, lossfn, label):
            continue
        total += weight * commutator_gradient(spec, a, rho_mean, loss_observable(povm, lossfn, label))
    return total


def finite_difference_gradient(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn, h: float = 1e-5) -> GradEstimate:
    if not 1e-7 <= h <= 1e-2:
        raise ValueError(f"step h={h} outside [1e-7, 1e-2]")
    a = check_params(spec, a)
    vals = np.empty(spec.num_params)
    for j in range(spec.num_params):
        e = np.zeros_like(a)
        e[j] = h
        plus = expected_loss(spec, a + e, sample.state, sample.label, povm, lossfn)
        minus = expected_loss(spec, a - e, sample.state, sample.label, povm, lossfn)
        vals[j] = (plus - minus) / (2 * h)
    return GradEstimate(vals, 0, "finite-difference")


def gradient_operators(spec: AnsatzSpec, a, obs: np.ndarray) -> np.ndarray:
    """Hermitian ``G_j`` with ``dL/da_j = tr(G_j rho_in)`` for every input ``rho_in``."""
    _require_layered(spec)
    a = check_params(spec, a)
    factors = factor_matrices(spec, a)
    p, dim = spec.num_params, spec.dim
    prefixes = np.empty((p, dim, dim), dtype=complex)
    u = np.eye(dim, dtype=complex)
    for kind, item in spec.steps:
        u = (item if kind == "fixed" else factors[item]) @ u
        if kind == "param":
            prefixes[item] = u
    _, obss = _sweep(spec, a, np.eye(dim, dtype=complex), obs)
    sig = spec.pauli_mats
    comm = 1j * (obss @ sig - sig @ obss)
    return np.conj(np.transpose(prefixes, (0, 2, 1))) @ comm @ prefixes


# -- derivative circuit ------------------------------------------------------


def hadamard_test_distribution(
    spec: AnsatzSpec, a, state: np.ndarray, povm: Povm, param_index: int
) -> dict[tuple, float]:
    """Exact outcome distribution ``P(yhat, z)`` of the ancilla derivative circuit.

    The ancilla (last qubit) starts in ``|+>``; the controlled unitary applies
    ``exp(-i pi/4 sigma)`` on the ``|0>`` branch and ``exp(+i pi/4 sigma)`` on
    the ``|1>`` branch, then the remaining layers act and ``M_yhat (x) |z><z|``
    is measured.
    """
    _require_layered(spec)
    if not 0 <= param_index < spec.num_params:
        raise IndexError(f"parameter index {param_index} out of range")
    u_leq, u_gt = split_unitaries(spec, a, param_index)
    rho_l = u_leq @ prepare_input(state, spec.num_qubits) @ dagger(u_leq)
    plus = np.full((2, 2), 0.5, dtype=complex)
    rho = np.kron(rho_l, plus)
    gen = spec.generators[param_index]
    proj = (np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex))
    v_s = np.kron(pauli_exp(gen, -QUARTER_PI), proj[0]) + np.kron(pauli_exp(gen, QUARTER_PI), proj[1])
    w = np.kron(u_gt, np.eye(2)) @ v_s
    rho = w @ rho @ dagger(w)
    out = {}
    for yh, m in zip(povm.outcomes, povm.operators):
        for z in (0, 1):
            out[(yh, z)] = float(np.einsum("ij,ji->", np.kron(m, proj[z]), rho).real)
    return out


def hadamard_test_value(label, y_hat, z: int, lossfn: LossFn) -> float:
    return -2.0 * (-1) ** z * lossfn(label, y_hat)


def hadamard_test_sample(
    spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn, param_index: int, rng: np.random.Generator
) -> float:
    if loss_is_constant(povm, lossfn, sample.label):
        return 0.0
    dist = hadamard_test_distribution(spec, a, sample.state, povm, param_index)
    keys = list(dist)
    y_hat, z = draw_outcome(np.array([dist[k] for k in keys]), keys, rng)
    return hadamard_test_value(sample.label, y_hat, z, lossfn)


def rqsgd_estimate(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn, rng: np.random.Generator) -> tuple[int, float]:
    """Uniform coordinate and its one-shot derivative; ``p * g * e_j`` is unbiased for the gradient."""
    j = int(rng.integers(spec.num_params))
    return j, hadamard_test_sample(spec, a, sample, povm, lossfn, j, rng)


# -- parameter shift -----------------------------------------------------------


def shifted_unitaries(spec: AnsatzSpec, a, delta: float) -> np.ndarray:
    """``U(a + delta e_j)`` for every ``j``, shape ``(p, dim, dim)``."""
    _require_layered(spec)
    a = check_params(spec, a)
    factors = factor_matrices(spec, a)
    p, dim = spec.num_params, spec.dim
    prefixes = np.empty((p, dim, dim), dtype=complex)
    suffixes = np.empty((p, dim, dim), dtype=complex)
    u = np.eye(dim, dtype=complex)
    for kind, item in spec.steps:
        u = (item if kind == "fixed" else factors[item]) @ u
        if kind == "param":
            prefixes[item] = u
    u = np.eye(dim, dtype=complex)
    for kind, item in reversed(spec.steps):
        if kind == "param":
            suffixes[item] = u
        u = u @ (item if kind == "fixed" else factors[item])
    eye = np.eye(dim, dtype=complex)
    shifts = np.cos(delta) * eye + 1j * np.sin(delta) * spec.pauli_mats
    return suffixes @ shifts @ prefixes


def psr_exact_difference(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn) -> np.ndarray:
    """Infinite-shot parameter-shift estimate ``L(a + pi/4 e_j) - L(a - pi/4 e_j)``."""
    a = check_params(spec, a)
    out = np.empty(spec.num_params)
    for j in range(spec.num_params):
        e = np.zeros_like(a)
        e[j] = QUARTER_PI
        out[j] = expected_loss(spec, a + e, sample.state, sample.label, povm, lossfn) - expected_loss(
            spec, a - e, sample.state, sample.label, povm, lossfn
        )
    return out


def psr_gradient(
    spec: AnsatzSpec, a, batch: Sequence, povm: Povm, lossfn: LossFn, m: int, rng: np.random.Generator
) -> GradEstimate:
    """Parameter-shift estimate from ``2 m p`` one-shot loss measurements.

    Parameter ``j`` uses samples ``batch[2mj : 2mj + m]`` at the ``+pi/4``
    shift and the next ``m`` at ``-pi/4``; its outcomes come from its own
    child stream of ``rng``.
    """
    if m < 1:
        raise ValueError("need at least one shot")
    if not batch:
        raise ValueError("empty batch")
    p = spec.num_params
    need = 2 * m * p
    if len(batch) < need:
        raise ValueError(f"parameter shift needs {need} samples, got {len(batch)}")
    shifted = {+1: shifted_unitaries(spec, a, QUARTER_PI), -1: shifted_unitaries(spec, a, -QUARTER_PI)}
    streams = rng.spawn(p)
    vals = np.empty(p)
    for j in range(p):
        means = {}
        for k, sign in enumerate((+1, -1)):
            u = shifted[sign][j]
            acc = 0.0
            for sample in batch[2 * m * j + k * m : 2 * m * j + (k + 1) * m]:
                rho = prepare_input(sample.state, spec.num_qubits)
                y_hat = draw_outcome(povm.probabilities(u @ rho @ dagger(u)), povm.outcomes, streams[j])
                acc += lossfn(sample.label, y_hat)
            means[sign] = acc / m
        vals[j] = means[+1] - means[-1]
    return GradEstimate(vals, need, "psr")


# -- shadow gradient -----------------------------------------------------------


def shadow_gradient(
    spec: AnsatzSpec, a, snapshot: ShadowSnapshot, label, povm: Povm, lossfn: LossFn, path: str = "dense"
) -> np.ndarray:
    """Commutator-formula gradient with a snapshot's shadow in place of the input state.

    ``path="factored"`` contracts gradient operators against the single-qubit
    shadow factors instead of densifying the shadow; both paths agree.
    """
    if loss_is_constant(povm, lossfn, label):
        return np.zeros(spec.num_params)
    obs = loss_observable(povm, lossfn, label)
    shadow = shadow_matrix(snapshot)
    if path == "dense":
        return commutator_gradient(spec, a, prepare_input(shadow.dense, spec.num_qubits), obs)
    if path != "factored":
        raise ValueError(f"unknown path {path!r}")
    ops = reduced_gradient_operators(spec, a, obs, snapshot.num_qubits)
    vals = np.array([trace_with_factors(g, shadow.factors) for g in ops])
    return vals.real


def qsgd_gradient(
    spec: AnsatzSpec,
    a,
    sample,
    povm: Povm,
    lossfn: LossFn,
    rng: np.random.Generator,
    shadows_per_sample: int = 1,
) -> GradEstimate:
    """All ``p`` derivative estimates from one snapshot of the sample.

    ``shadows_per_sample > 1`` averages several snapshots of the *same*
    sample; that is an ablation knob and is not physically realizable since
    measurement collapses the state.
    """
    _require_layered(spec)
    vals = np.zeros(spec.num_params)
    for _ in range(shadows_per_sample):
        snap = sample_snapshot(sample.state, rng)
        vals += shadow_gradient(spec, a, snap, sample.label, povm, lossfn)
    return GradEstimate(vals / shadows_per_sample, 1, "qsgd" if shadows_per_sample == 1 else "qsgd-nonphysical")


# -- non-product ansatz ----------------------------------------------------------


def tilde_gradients(spec: AnsatzSpec, a, sample, povm: Povm, lossfn: LossFn) -> dict[tuple[int, ...], float]:
    """``i tr(O [sigma^t, rho_out])`` for every Pauli string ``t`` on the system."""
    from .ansatz import output_state
    from .qcore import all_pauli_strings

    rho_out = output_state(spec, a, sample.state)
    obs = loss_observable(povm, lossfn, sample.label)
    out = {}
    for t in all_pauli_strings(spec.num_qubits):
        s = pauli_matrix(t)
        out[t.letters] = float((1j * np.trace(obs @ (s @ rho_out - rho_out @ s))).real)
    return out


def _product(*strings: PauliString) -> PauliString:
    out = strings[0]
    for s in strings[1:]:
        out = pauli_product(out, s)
    return out


def nonproduct_gradient_expansion(
    generators: Sequence[PauliString], a, tilde_grads: Mapping[tuple[int, ...], float]
) -> np.ndarray:
    """Second-order structure-constant expansion of ``dL/da_s`` for ``U = exp(i sum_r a_r sigma^r)``.

    Uses ``dU/da_s`` = ``i [integral_0^1 e^{iuA} sigma^s e^{-iuA} du] U`` with
    ``A = sum_r a_r sigma^r`` and expands the integrand to second order:
    ``sigma^s + (i/2)[A, sigma^s] - (1/6)[A, [A, sigma^s]]``. Each product of
    Pauli strings collapses to one string through the structure constants, and
    the tilde derivatives are extended complex-linearly. Error is
    ``O(|a|^3)``.
    """
    generators = [g.unsigned() for g in generators]
    if len({g.letters for g in generators}) != len(generators):
        raise ValueError("duplicate generator strings")
    a = np.asarray(a, dtype=float)

    def d(p: PauliString) -> complex:
        return p.phase * tilde_grads[p.letters]

    out = np.empty(len(generators))
    for idx, s in enumerate(generators):
        first = 0j
        second = 0j
        for r, ar in zip(generators, a):
            if ar == 0:
                continue
            first += ar * (d(_product(r, s)) - d(_product(s, r)))
            for rp, arp in zip(generators, a):
                if arp == 0:
                    continue
                # [r, [rp, s]] = r rp s - r s rp - rp s r + s rp r
                second += ar * arp * (
                    d(_product(r, rp, s)) - d(_product(r, s, rp)) - d(_product(rp, s, r)) + d(_product(s, rp, r))
                )
        value = tilde_grads[s.letters] + 0.5j * first - second / 6
        if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
            raise ArithmeticError(f"expansion has imaginary residue {value.imag:.3e}")
        out[idx] = value.real
    return out


def reduced_gradient_operators(spec: AnsatzSpec, a, obs: np.ndarray, data_qubits: int) -> np.ndarray:
    """Gradient operators restricted to the data register (ancillas fixed at ``|0>``)."""
    ops = gradient_operators(spec, a, obs)
    n_anc = spec.num_qubits - data_qubits
    return ops.reshape(spec.num_params, 2**data_qubits, 2**n_anc, 2**data_qubits, 2**n_anc)[:, :, 0, :, 0]


__all__ = [
    "GradEstimate",
    "batch_exact_gradient",
    "commutator_gradient",
    "exact_gradient",
    "finite_difference_gradient",
    "gradient_operators",
    "hadamard_test_distribution",
    "hadamard_test_sample",
    "hadamard_test_value",
    "loss_is_constant",
    "nonproduct_gradient_expansion",
    "psr_exact_difference",
    "psr_gradient",
    "qsgd_gradient",
    "rqsgd_estimate",
    "shadow_gradient",
    "shifted_unitaries",
    "tilde_gradients",
]
