"""Training loops, convergence-bound arithmetic and the Helstrom accuracy ceiling."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .ansatz import AnsatzSpec, InputBatch, LossFn, Povm, evaluate
from .gradients import (
    batch_exact_gradient,
    exact_gradient,
    psr_gradient,
    qsgd_gradient,
    rqsgd_estimate,
)
from .qcore import trace_norm

METHODS = ("qsgd", "rqsgd", "psr", "exact")
SCHEDULES = ("fixed", "decaying", "averaged")
INIT_HALF_WIDTH = 0.1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``schedule`` selects the step size at iteration ``t`` (1-based):
    ``fixed`` uses ``eta``; ``decaying`` uses ``beta / (gamma0 + t)``;
    ``averaged`` uses ``1 / (gamma * sqrt(T))`` with ``T`` the iteration count.
    ``eval_every`` counts iterations.
    """

    method: str
    samples: int
    eta: float = 0.1
    schedule: str = "fixed"
    beta: float = 1.0
    gamma0: float = 1.0
    gamma: float = 1.0
    shots: int = 1
    seed: int = 0
    eval_every: int = 100
    keep_snapshots: bool = False
    shadows_per_sample: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if self.eta < 0 or self.beta < 0 or self.gamma0 < 0 or self.gamma <= 0:
            raise ValueError("step-size parameters must be nonnegative (gamma positive)")
        if self.samples < 1 or self.shots < 1 or self.eval_every < 1 or self.shadows_per_sample < 1:
            raise ValueError("samples, shots, eval_every and shadows_per_sample must be positive")

    def samples_per_iteration(self, num_params: int) -> int:
        return 2 * self.shots * num_params if self.method == "psr" else 1

    def iterations(self, num_params: int) -> int:
        per = self.samples_per_iteration(num_params)
        if self.samples < per:
            raise ValueError(f"budget {self.samples} is below one {self.method} iteration ({per} samples)")
        return self.samples // per

    def step_size(self, t: int, total: int) -> float:
        if self.schedule == "fixed":
            return self.eta
        if self.schedule == "decaying":
            return self.beta / (self.gamma0 + t)
        return 1.0 / (self.gamma * math.sqrt(total))


@dataclass(frozen=True)
class TrainRecord:
    iter: int
    samples_used: int
    train_loss: float
    train_accuracy: float
    grad_norm_sq: float
    born_accuracy: float = float("nan")
    a_snapshot: np.ndarray | None = field(default=None, compare=False)


def initial_params(num_params: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, size=num_params)


def _record(spec, a, t, used, batch, povm, lossfn, keep) -> TrainRecord:
    ev = evaluate(spec, a, batch, povm, lossfn)
    g = batch_exact_gradient(spec, a, batch, povm, lossfn)
    return TrainRecord(t, used, ev.loss, ev.accuracy, float(g @ g), ev.born_accuracy, a.copy() if keep else None)


def train(
    spec: AnsatzSpec,
    stream: Iterable,
    config: TrainConfig,
    povm: Povm,
    lossfn: LossFn,
    eval_samples: Sequence,
    a0: np.ndarray | None = None,
) -> list[TrainRecord]:
    """Run one method on ``config.samples`` samples drawn in order from ``stream``.

    A record at iteration 0 describes the initial point; later records follow
    every ``eval_every`` iterations and after the last one. The last record
    always carries the final parameters.
    """
    p = spec.num_params
    total = config.iterations(p)
    per = config.samples_per_iteration(p)
    init_seq, train_seq = np.random.SeedSequence(config.seed).spawn(2)
    a = initial_params(p, np.random.default_rng(init_seq)) if a0 is None else np.array(a0, dtype=float)
    rng = np.random.default_rng(train_seq)
    batch = eval_samples if isinstance(eval_samples, InputBatch) else InputBatch.from_samples(eval_samples, spec.num_qubits)
    it = iter(stream)
    used = 0
    records = [_record(spec, a, 0, used, batch, povm, lossfn, config.keep_snapshots)]
    for t in range(1, total + 1):
        chunk = [next(it, None) for _ in range(per)]
        if chunk[-1] is None:
            raise ValueError(f"sample stream exhausted after {used + sum(c is not None for c in chunk)} samples")
        used += per
        eta = config.step_size(t, total)
        if config.method == "qsgd":
            a = a - eta * qsgd_gradient(spec, a, chunk[0], povm, lossfn, rng, config.shadows_per_sample).values
        elif config.method == "exact":
            a = a - eta * exact_gradient(spec, a, chunk[0], povm, lossfn).values
        elif config.method == "psr":
            a = a - eta * psr_gradient(spec, a, chunk, povm, lossfn, config.shots, rng).values
        else:
            j, g = rqsgd_estimate(spec, a, chunk[0], povm, lossfn, rng)
            a = a.copy()
            a[j] -= eta * g
        if t % config.eval_every == 0 or t == total:
            records.append(_record(spec, a, t, used, batch, povm, lossfn, config.keep_snapshots or t == total))
    if records[-1].a_snapshot is None:
        records[-1] = replace(records[-1], a_snapshot=a.copy())
    return records


def final_params(records: Sequence[TrainRecord]) -> np.ndarray:
    return records[-1].a_snapshot


def averaged_iterate(records: Sequence[TrainRecord]) -> np.ndarray:
    snaps = [r.a_snapshot for r in records if r.a_snapshot is not None]
    if not snaps:
        raise ValueError("no parameter snapshots retained")
    return np.mean(snaps, axis=0)


# -- bounds ------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    method: str
    C: float
    predicted_gap: float
    T: int
    variants: dict = field(default_factory=dict)
    k_star: int | None = None


def bound_constant(method: str, p: int, k: int) -> float:
    """Method constant of the fixed-step non-convex rate."""
    if method == "qsgd":
        return 2 * p**1.5 * 3**k
    if method == "rqsgd":
        return float(p**2.5)
    if method == "psr":
        return 4 * p**2.5
    raise ValueError(f"no bound for method {method!r}")


def qsgd_crossover(p: int) -> int:
    """Largest locality ``k`` with the QSGD constant strictly below the parameter-shift constant."""
    k = -1
    while bound_constant("qsgd", p, k + 1) < bound_constant("psr", p, 0):
        k += 1
    return k


def convergence_bound(
    method: str, p: int, k: int, l_max: float, n: int, eps: float, gap0: float, m: int = 1
) -> BoundReport:
    """``eps + C l_max^3 gap0 / (n eps)`` with the method's constant.

    Iteration counts: ``T = n`` for the one-shot methods and
    ``n // (m p)`` for parameter shift (the trainer spends ``2 m p`` per
    iteration instead).
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if p < 1 or k < 0 or n < 1 or m < 1:
        raise ValueError("p, n, m must be positive and k nonnegative")
    c = bound_constant(method, p, k)
    gap = eps + c * l_max**3 * gap0 / (n * eps)
    variants = {}
    if method == "qsgd":
        variants = {
            "rate": c,
            "summary": p**1.5 * 3**k,
            "second-moment": p**1.5 * 9**k,
        }
    t = n // (m * p) if method == "psr" else n
    return BoundReport(method, c, gap, t, variants, qsgd_crossover(p))


def lipschitz_constant(p: int, l_max: float) -> float:
    return 2 * math.sqrt(p) * l_max


def max_gradient_norm(spec: AnsatzSpec, povm: Povm, lossfn: LossFn, states: Sequence, points: int, rng) -> float:
    """Largest exact per-sample gradient norm over random parameters and the given labeled states."""
    best = 0.0
    for _ in range(points):
        a = rng.uniform(-np.pi, np.pi, size=spec.num_params)
        s = states[int(rng.integers(len(states)))]
        g = exact_gradient(spec, a, s, povm, lossfn).values
        best = max(best, float(np.linalg.norm(g)))
    return best


# -- accuracy ceiling ---------------------------------------------------------------


def helstrom_ceiling(samples: Sequence) -> tuple[float, float]:
    """Minimum mean 0-1 loss over all binary measurements, and the matching accuracy."""
    if not samples:
        raise ValueError("empty sample set")
    acc = None
    for s in samples:
        if s.label not in (-1, 1):
            raise ValueError(f"labels must be -1 or +1, got {s.label}")
        rho = np.asarray(s.state, dtype=complex)
        rho = np.outer(rho, rho.conj()) if rho.ndim == 1 else rho
        term = s.label * rho
        acc = term if acc is None else acc + term
    min_loss = 0.5 * (1 - trace_norm(acc / len(samples)))
    return float(min_loss), float(1 - min_loss)


__all__ = [
    "BoundReport",
    "METHODS",
    "SCHEDULES",
    "TrainConfig",
    "TrainRecord",
    "averaged_iterate",
    "bound_constant",
    "convergence_bound",
    "final_params",
    "helstrom_ceiling",
    "initial_params",
    "lipschitz_constant",
    "max_gradient_norm",
    "qsgd_crossover",
    "train",
]
