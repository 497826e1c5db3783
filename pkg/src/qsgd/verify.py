"""Registered end-to-end checks, shared by ``qsgd verify`` and the acceptance tests.

Every check returns a ``CheckResult``; ``run_checks`` runs all of them at a
depth (``fast`` or ``full``). Random instances come from fixed seeds.
"""

from __future__ import annotations

import json
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import shadows
from .ansatz import AnsatzSpec, Layer, Povm, zero_one_loss
from .datasets import experiment_spec
from .experiments import (
    VALIDATION_SIZE,
    VALIDATION_TAG,
    RunConfig,
    compare,
    compare_table,
    data_rng,
    records_to_csv,
    run_method,
)
from .gradients import (
    exact_gradient,
    finite_difference_gradient,
    hadamard_test_distribution,
    hadamard_test_value,
    nonproduct_gradient_expansion,
    psr_exact_difference,
    shadow_gradient,
    tilde_gradients,
)
from .optimize import METHODS, TrainConfig, bound_constant, convergence_bound, helstrom_ceiling, train
from .qcore import PauliString, all_pauli_strings, embed_operator

DEPTHS = ("fast", "full")
TABLE_ACCURACY = {"exp1": 0.9247, "exp2-bell": 0.9418}
TABLE_ACCURACY_FLOOR = {"exp3": 0.95}
TABLE_CEILING = {"exp1": 0.9381, "exp2-bell": 0.9516, "exp3": 0.9978}


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: object
    target: object
    tolerance: object
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["status"] = "pass" if self.passed else "fail"
        del d["passed"]
        return json.dumps(d, default=_jsonable, sort_keys=True)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# -- random instances ------------------------------------------------------------


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    dim = 2**d
    g = rng.standard_normal((dim, rank or dim)) + 1j * rng.standard_normal((dim, rank or dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pauli(rng: np.random.Generator, d: int, nontrivial: bool = True) -> PauliString:
    while True:
        p = PauliString(tuple(int(x) for x in rng.integers(0, 4, size=d)))
        if p.weight or not nontrivial:
            return p


def random_layered(rng: np.random.Generator, d: int, max_params: int = 8, fixed: bool = True) -> AnsatzSpec:
    p = int(rng.integers(1, max_params + 1))
    gens = [random_pauli(rng, d) for _ in range(p)]
    cut = int(rng.integers(0, p + 1))
    layers = [Layer(tuple(gens[:cut])), Layer(tuple(gens[cut:]), random_unitary(rng, 2**d) if fixed else None)]
    return AnsatzSpec(d, tuple(layers))


def random_binary_povm(rng: np.random.Generator, d: int) -> Povm:
    u = random_unitary(rng, 2**d)
    k = int(rng.integers(1, 2**d))
    proj = u[:, :k] @ u[:, :k].conj().T
    return Povm((-1, 1), (proj, np.eye(2**d) - proj))


@dataclass(frozen=True)
class _Sample:
    state: np.ndarray
    label: int


def _instance(seed: int, d: int, fixed: bool = True):
    rng = np.random.default_rng(seed)
    spec = random_layered(rng, d, fixed=fixed)
    povm = random_binary_povm(rng, d)
    sample = _Sample(random_density(rng, d), int(rng.choice([-1, 1])))
    a = rng.uniform(-np.pi, np.pi, size=spec.num_params)
    return spec, povm, sample, a


# -- checks ----------------------------------------------------------------------


def check_shadow_unbiased(depth: str) -> CheckResult:
    worst = 0.0
    for d in (1, 2, 3):
        rng = np.random.default_rng(100 + d)
        for _ in range(20):
            rho = random_density(rng, d)
            mean = shadows.brute_force_expectation(rho, lambda s: shadows.shadow_matrix(s).dense)
            worst = max(worst, float(np.max(np.abs(mean - rho))))
    return CheckResult("shadow_unbiasedness", worst <= 1e-10, worst, 0.0, 1e-10)


def check_estimator(depth: str) -> CheckResult:
    rng = np.random.default_rng(200)
    worst_bias, worst_ratio, ratios_3k = 0.0, 0.0, []
    for _ in range(20):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, d + 1))
        support = sorted(rng.choice(d, size=k, replace=False).tolist())
        m = random_hermitian(rng, 2**k)
        rho = random_density(rng, d)
        exact = float(np.trace(embed_operator(m, support, d) @ rho).real)

        def f(snap, m=m, support=support):
            return shadows.trace_with_factors(m, shadows.shadow_matrix(snap).factors[support]).real

        mean = float(shadows.brute_force_expectation(rho, f))
        var = shadows.brute_force_variance(rho, f)
        norm2 = float(np.max(np.abs(np.linalg.eigvalsh(m)))) ** 2
        worst_bias = max(worst_bias, abs(mean - exact))
        worst_ratio = max(worst_ratio, var / (9**k * norm2))
        ratios_3k.append(var / (3**k * norm2))
    passed = worst_bias <= 1e-10 and worst_ratio <= 1.0
    return CheckResult(
        "estimator_unbiasedness_and_variance", passed, {"bias": worst_bias, "var_over_9k_bound": worst_ratio},
        {"bias": 0.0, "var_over_9k_bound": "<= 1"}, 1e-10,
        details={"max_var_over_3k_bound": max(ratios_3k), "exceeds_3k_bound": sum(r > 1 for r in ratios_3k)},
    )


def check_gradient_fd(depth: str) -> CheckResult:
    lossfn = zero_one_loss()
    worst = 0.0
    for n_exp, exp_id in enumerate(("exp1", "exp2-bell", "exp3")):
        ex = experiment_spec(exp_id)
        rng = np.random.default_rng(300 + n_exp)
        samples = ex.generate(10, rng)
        for s in samples:
            a = rng.uniform(-np.pi, np.pi, size=ex.ansatz.num_params)
            g = exact_gradient(ex.ansatz, a, s, ex.povm, lossfn).values
            fd = finite_difference_gradient(ex.ansatz, a, s, ex.povm, lossfn, h=1e-5).values
            worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return CheckResult("gradient_vs_finite_difference", worst <= 1e-6, worst, 0.0, 1e-6)


def check_hadamard(depth: str) -> CheckResult:
    lossfn = zero_one_loss()
    worst = 0.0
    for seed in range(20):
        spec, povm, sample, a = _instance(400 + seed, 2)
        g = exact_gradient(spec, a, sample, povm, lossfn).values
        for j in range(spec.num_params):
            dist = hadamard_test_distribution(spec, a, sample.state, povm, j)
            mean = sum(p * hadamard_test_value(sample.label, yh, z, lossfn) for (yh, z), p in dist.items())
            worst = max(worst, abs(mean - g[j]))
    return CheckResult("hadamard_test_unbiasedness", worst <= 1e-10, worst, 0.0, 1e-10)


def check_qsgd_unbiased(depth: str) -> CheckResult:
    lossfn = zero_one_loss()
    worst = 0.0
    for seed in range(20):
        spec, povm, sample, a = _instance(500 + seed, 2)
        g = exact_gradient(spec, a, sample, povm, lossfn).values
        mean = shadows.brute_force_expectation(
            sample.state, lambda s: shadow_gradient(spec, a, s, sample.label, povm, lossfn)
        )
        worst = max(worst, float(np.max(np.abs(mean - g))))
    return CheckResult("qsgd_gradient_unbiasedness", worst <= 1e-10, worst, 0.0, 1e-10)


def check_psr_identity(depth: str) -> CheckResult:
    lossfn = zero_one_loss()
    worst = 0.0
    for seed in range(20):
        spec, povm, sample, a = _instance(400 + seed, 2)
        g = exact_gradient(spec, a, sample, povm, lossfn).values
        worst = max(worst, float(np.max(np.abs(psr_exact_difference(spec, a, sample, povm, lossfn) - g))))
    return CheckResult("parameter_shift_identity", worst <= 1e-10, worst, 0.0, 1e-10)


def kappa_instance(seed: int, d: int):
    rng = np.random.default_rng(seed)
    pool = [p for p in all_pauli_strings(d) if p.weight]
    count = min(len(pool), 3 if d == 1 else 5)
    gens = [pool[i] for i in rng.choice(len(pool), size=count, replace=False)]
    spec = AnsatzSpec(d, (Layer(tuple(gens)),), form="single-exponential")
    direction = rng.standard_normal(count)
    direction /= np.linalg.norm(direction)
    povm = random_binary_povm(rng, d)
    sample = _Sample(random_density(rng, d), int(rng.choice([-1, 1])))
    return spec, povm, sample, direction


def expansion_error(spec, povm, sample, a) -> float:
    lossfn = zero_one_loss()
    fd = finite_difference_gradient(spec, a, sample, povm, lossfn, h=1e-5).values
    approx = nonproduct_gradient_expansion(spec.generators, a, tilde_gradients(spec, a, sample, povm, lossfn))
    return float(np.linalg.norm(approx - fd))


def check_kappa(depth: str) -> CheckResult:
    ratios = []
    for i in range(10):
        spec, povm, sample, direction = kappa_instance(700 + i, 1 if i < 5 else 2)
        e1 = expansion_error(spec, povm, sample, 0.1 * direction)
        e2 = expansion_error(spec, povm, sample, 0.05 * direction)
        ratios.append(e1 / e2)
    passed = all(6 <= r <= 10 for r in ratios)
    return CheckResult("kappa_expansion_cubic_decay", passed, [round(r, 3) for r in ratios], [6, 10], "range")


def _ordering(depth: str) -> tuple[int, int, list]:
    seeds = range(5)
    samples = None if depth == "full" else 9600
    final_wins = curve_wins = 0
    per_seed = []
    for seed in seeds:
        config = RunConfig("exp1", ("qsgd", "psr"), samples=samples, seed=seed)
        q = run_method(config, "qsgd")
        p = run_method(config, "psr")
        budget = q[-1].samples_used
        xs = [r.samples_used for r in p if r.samples_used > 0.2 * budget]
        q_at = np.interp(xs, [r.samples_used for r in q], [r.train_accuracy for r in q])
        p_at = np.array([r.train_accuracy for r in p if r.samples_used > 0.2 * budget])
        final = q[-1].train_accuracy > p[-1].train_accuracy
        dominates = bool(np.all(q_at >= p_at))
        final_wins += final
        curve_wins += dominates
        per_seed.append({"seed": seed, "qsgd": q[-1].train_accuracy, "psr": p[-1].train_accuracy, "dominates": dominates})
    return final_wins, curve_wins, per_seed


def check_ordering(depth: str) -> CheckResult:
    final_wins, curve_wins, per_seed = _ordering(depth)
    passed = final_wins >= 4 and curve_wins >= 4
    return CheckResult(
        "method_ordering_qsgd_over_psr", passed, {"final_wins": final_wins, "curve_wins": curve_wins},
        {"final_wins": ">= 4 of 5", "curve_wins": ">= 4 of 5"}, "count",
        details={"depth": depth, "budget": "default" if depth == "full" else 9600, "seeds": per_seed},
    )


def check_table(depth: str) -> CheckResult:
    measured, failures = {}, []
    for exp_id, target in TABLE_CEILING.items():
        ex = experiment_spec(exp_id)
        validation = ex.generate(VALIDATION_SIZE, data_rng(0, VALIDATION_TAG))
        _, ceiling = helstrom_ceiling(validation)
        measured[f"{exp_id}.ceiling"] = round(ceiling, 4)
        if abs(ceiling - target) > 0.01:
            failures.append(f"{exp_id}.ceiling")
    if depth == "full":
        for exp_id in TABLE_CEILING:
            (row,) = compare(RunConfig(exp_id, ("qsgd",), seed=0))
            measured[f"{exp_id}.qsgd_accuracy"] = round(row.val_accuracy, 4)
            measured[f"{exp_id}.qsgd_born_accuracy"] = round(row.val_born_accuracy, 4)
            if exp_id in TABLE_ACCURACY and abs(row.val_accuracy - TABLE_ACCURACY[exp_id]) > 0.03:
                failures.append(f"{exp_id}.qsgd_accuracy")
            if exp_id in TABLE_ACCURACY_FLOOR and row.val_accuracy < TABLE_ACCURACY_FLOOR[exp_id]:
                failures.append(f"{exp_id}.qsgd_accuracy")
    target = {f"{k}.ceiling": v for k, v in TABLE_CEILING.items()}
    if depth == "full":
        target.update({f"{k}.qsgd_accuracy": v for k, v in TABLE_ACCURACY.items()})
        target.update({f"{k}.qsgd_accuracy": f">= {v}" for k, v in TABLE_ACCURACY_FLOOR.items()})
    return CheckResult(
        "table_reproduction", not failures, measured, target, {"accuracy": 0.03, "ceiling": 0.01},
        details={"failed": failures, "training_runs": depth == "full"},
    )


class _CountingStream:
    def __init__(self, items):
        self.items = items
        self.taken = 0

    def __iter__(self):
        for item in self.items:
            self.taken += 1
            yield item


def check_bounds_and_accounting(depth: str) -> CheckResult:
    problems = []
    c = bound_constant("qsgd", 48, 2)
    # 2 * 48^(3/2) * 3^2 written as 18 * 48 * sqrt(48)
    c_ref = 18 * 48 * np.sqrt(48)
    if abs(c - c_ref) > 1e-9 * c_ref:
        problems.append(f"qsgd C(48,2)={c}")
    if bound_constant("psr", 48, 2) != 4 * 48**2.5 or bound_constant("rqsgd", 48, 2) != 48**2.5:
        problems.append("psr/rqsgd constants")
    if bound_constant("qsgd", 1, 0) != 2:
        problems.append("qsgd C(1,0)")
    rep = convergence_bound("psr", 48, 2, 1.0, 57600, 0.5, 0.3, m=2)
    if rep.T != 57600 // (2 * 48):
        problems.append("psr T")
    ex = experiment_spec("exp1")
    rng = np.random.default_rng(1100)
    pool = ex.generate(400, rng)
    accounting = {}
    for method in METHODS:
        cfg = TrainConfig(method, 250, eta=0.05, shots=1, seed=3, eval_every=50)
        stream = _CountingStream(pool)
        recs = train(ex.ansatz, stream, cfg, ex.povm, zero_one_loss(), pool[:50])
        per = cfg.samples_per_iteration(ex.ansatz.num_params)
        expected = cfg.iterations(ex.ansatz.num_params) * per
        accounting[method] = (stream.taken, recs[-1].samples_used, expected)
        if not stream.taken == recs[-1].samples_used == expected:
            problems.append(f"{method} accounting")
    return CheckResult(
        "bound_constants_and_sample_accounting", not problems, {"qsgd_C_48_2": c, "accounting": accounting},
        {"qsgd_C_48_2": c_ref}, "1e-9 relative", details={"problems": problems},
    )


def check_determinism(depth: str) -> CheckResult:
    samples = 2000 if depth == "fast" else 9600
    base = RunConfig("exp1", ("qsgd", "rqsgd", "psr", "exact"), samples=samples, seed=11, eta=0.05)
    serial = compare(base)
    again = compare(base)
    parallel = compare(replace(base, jobs=2))
    csv_serial = [records_to_csv(list(r.records)) for r in serial]
    same_rerun = csv_serial == [records_to_csv(list(r.records)) for r in again]
    same_parallel = csv_serial == [records_to_csv(list(r.records)) for r in parallel]
    same_table = compare_table(serial) == compare_table(parallel)
    ok = same_rerun and same_parallel and same_table
    return CheckResult(
        "determinism", ok, {"rerun": same_rerun, "parallel": same_parallel, "table": same_table}, True, "byte-exact"
    )


CHECKS: dict[str, Callable[[str], CheckResult]] = {
    "1": check_shadow_unbiased,
    "2": check_estimator,
    "3": check_gradient_fd,
    "4": check_hadamard,
    "5": check_qsgd_unbiased,
    "6": check_psr_identity,
    "7": check_kappa,
    "8": check_table,
    "9": check_ordering,
    "10": check_bounds_and_accounting,
    "11": check_determinism,
}


def run_check(key: str, depth: str) -> CheckResult:
    t0 = time.perf_counter()
    try:
        result = CHECKS[key](depth)
    except Exception as exc:  # a crashing check is a failing check
        result = CheckResult(CHECKS[key].__name__, False, f"{type(exc).__name__}: {exc}", None, None)
    result.seconds = round(time.perf_counter() - t0, 2)
    return result


def run_checks(depth: str = "fast", only: list[str] | None = None) -> list[CheckResult]:
    if depth not in DEPTHS:
        raise ValueError(f"unknown depth {depth!r}; choose from {DEPTHS}")
    return [run_check(k, depth) for k in (only or CHECKS)]


__all__ = ["CHECKS", "CheckResult", "DEPTHS", "run_check", "run_checks"]
