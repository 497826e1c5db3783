"""Run configuration, seeded data streams and the train / compare / grid-search jobs."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .ansatz import InputBatch, evaluate, zero_one_loss
from .datasets import EXP2_VARIANTS, EXPERIMENTS, ExperimentSpec, experiment_spec
from .optimize import METHODS, SCHEDULES, TrainConfig, TrainRecord, helstrom_ceiling, train

VALIDATION_SIZE = 2000
CURVE_POINTS = 20
ETA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
DEFAULT_SHOTS = 2
CSV_HEADER = ("iter", "samples_used", "train_loss", "train_accuracy", "grad_norm_sq")

# stream tags for SeedSequence([seed, tag]); method streams use METHOD_TAG + method index
DATA_TAG, VALIDATION_TAG, METHOD_TAG = 0, 1, 16


class ConfigError(ValueError):
    pass


def resolve_experiment(experiment: str, variant: str | None = None) -> str:
    """Map ``exp2`` plus a variant onto a concrete experiment id (Bell by default)."""
    if variant is not None and variant not in EXP2_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {EXP2_VARIANTS}")
    if experiment == "exp2":
        return "exp2" if variant == "as-written" else "exp2-bell"
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    if variant is not None and (experiment, variant) != ("exp2-bell", "bell"):
        raise ConfigError("--variant applies to exp2 only")
    return experiment


def load_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key] = value
    return out


def default_step_sizes() -> dict[tuple[str, str], float]:
    """Committed grid-search winners keyed by ``(experiment, method)``."""
    text = resources.files("qsgd").joinpath("configs/step_sizes.cfg").read_text()
    out = {}
    for key, value in load_key_values(text).items():
        exp_id, method = key.rsplit(".", 1)
        out[(exp_id, method)] = float(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "exp1"
    methods: tuple[str, ...] = ("qsgd",)
    samples: int | None = None
    eta: float | None = None
    schedule: str = "fixed"
    beta: float = 1.0
    gamma0: float = 1.0
    gamma: float = 1.0
    shots: int = DEFAULT_SHOTS
    seed: int = 0
    eval_every: int | None = None
    out: str | None = None
    variant: str | None = None
    jobs: int = 1

    def __post_init__(self):
        resolve_experiment(self.experiment, self.variant)
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if not self.methods:
            raise ConfigError("no method given")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if self.samples is not None and self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.eta is not None and self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.shots < 1 or self.jobs < 1 or (self.eval_every is not None and self.eval_every < 1):
            raise ConfigError("shots, jobs and eval_every must be positive")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key == "method":
                key = "methods"
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                if key == "methods":
                    kwargs[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
                elif key in ("samples", "shots", "seed", "eval_every", "jobs"):
                    kwargs[key] = int(raw)
                elif key in ("eta", "beta", "gamma0", "gamma"):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return cls(**kwargs)

    @property
    def exp_id(self) -> str:
        return resolve_experiment(self.experiment, self.variant)

    def spec(self) -> ExperimentSpec:
        return experiment_spec(self.exp_id)

    def budget(self) -> int:
        return self.samples if self.samples is not None else self.spec().budget

    def step_size(self, method: str) -> float:
        if self.eta is not None:
            return self.eta
        table = default_step_sizes()
        if (self.exp_id, method) not in table:
            raise ConfigError(f"no committed step size for {self.exp_id}/{method}; pass --eta")
        return table[(self.exp_id, method)]

    def train_config(self, method: str) -> TrainConfig:
        spec = self.spec()
        per = 2 * self.shots * spec.ansatz.num_params if method == "psr" else 1
        n = self.budget()
        eval_every = self.eval_every or max(1, n // CURVE_POINTS // per)
        seed = int(np.random.SeedSequence([self.seed, METHOD_TAG + METHODS.index(method)]).generate_state(1)[0])
        try:
            tc = TrainConfig(
                method, n, eta=self.step_size(method), schedule=self.schedule, beta=self.beta,
                gamma0=self.gamma0, gamma=self.gamma, shots=self.shots, seed=seed, eval_every=eval_every,
            )
            tc.iterations(spec.ansatz.num_params)
            return tc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def data_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def datasets_for(config: RunConfig):
    spec = config.spec()
    train_set = spec.generate(config.budget(), data_rng(config.seed, DATA_TAG))
    validation = spec.generate(VALIDATION_SIZE, data_rng(config.seed, VALIDATION_TAG))
    return spec, train_set, validation


def run_method(config: RunConfig, method: str, data=None) -> list[TrainRecord]:
    spec, train_set, validation = data if data is not None else datasets_for(config)
    tc = config.train_config(method)
    return train(spec.ansatz, train_set, tc, spec.povm, zero_one_loss(), validation)


def records_to_csv(records: list[TrainRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.iter, r.samples_used, repr(r.train_loss), repr(r.train_accuracy), repr(r.grad_norm_sq)])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass(frozen=True)
class CompareRow:
    method: str
    eta: float
    samples_used: int
    val_accuracy: float
    val_born_accuracy: float
    val_loss: float
    helstrom_accuracy: float
    records: tuple[TrainRecord, ...] = ()


def _compare_one(args) -> CompareRow:
    config, method = args
    spec, train_set, validation = datasets_for(config)
    records = run_method(config, method, (spec, train_set, validation))
    batch = InputBatch.from_samples(validation, spec.num_qubits)
    ev = evaluate(spec.ansatz, records[-1].a_snapshot, batch, spec.povm, zero_one_loss())
    _, ceiling = helstrom_ceiling(validation)
    return CompareRow(
        method, config.step_size(method), records[-1].samples_used, ev.accuracy, ev.born_accuracy, ev.loss,
        ceiling, tuple(records),
    )


def compare(config: RunConfig) -> list[CompareRow]:
    """Train every method on the same samples and score all on one validation set."""
    jobs = [(config, m) for m in config.methods]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_compare_one, jobs))
    return [_compare_one(j) for j in jobs]


def compare_table(rows: list[CompareRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "eta", "samples_used", "val_accuracy", "val_born_accuracy", "val_loss", "helstrom_accuracy"])
    for r in rows:
        w.writerow([r.method, r.eta, r.samples_used, f"{r.val_accuracy:.4f}", f"{r.val_born_accuracy:.4f}",
                    f"{r.val_loss:.4f}", f"{r.helstrom_accuracy:.4f}"])
    return buf.getvalue()


def tail_accuracy(records: list[TrainRecord], fraction: float = 0.2) -> float:
    """Mean held-out accuracy over the last ``fraction`` of evaluation points."""
    k = max(1, int(round(fraction * (len(records) - 1))))
    return float(np.mean([r.train_accuracy for r in records[-k:]]))


def grid_search(experiment: str, method: str, seeds=(1000, 1001), etas=ETA_GRID, samples: int | None = None) -> dict[float, float]:
    """Tail accuracy averaged over tuning seeds for each step size; seeds differ from reporting runs."""
    # "exp2" names the as-written variant here, not the Bell default of the CLI
    variant = "as-written" if experiment == "exp2" else None
    out = {}
    for eta in etas:
        scores = []
        for seed in seeds:
            config = RunConfig(experiment, (method,), samples=samples, eta=eta, seed=seed, variant=variant)
            scores.append(tail_accuracy(run_method(config, method)))
        out[eta] = float(np.mean(scores))
    return out


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
