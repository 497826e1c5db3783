import math

import numpy as np
import pytest
from conftest import Sample

from qsgd.ansatz import AnsatzSpec, Layer, Povm, zero_one_loss
from qsgd.datasets import experiment_spec, gen_exp1
from qsgd.optimize import (
    TrainConfig,
    TrainRecord,
    averaged_iterate,
    bound_constant,
    convergence_bound,
    final_params,
    helstrom_ceiling,
    lipschitz_constant,
    max_gradient_norm,
    qsgd_crossover,
    train,
)
from qsgd.qcore import PauliString

LOSS = zero_one_loss()
X_SPEC = AnsatzSpec(1, (Layer((PauliString.from_label("X"),)),))
X_POVM = Povm((-1, 1), (np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)))
X_SAMPLE = Sample([1, 0], 1)


def run_single_qubit(method, n, a0, **kw):
    config = TrainConfig(method, n, **{"eval_every": 1, **kw})
    return train(X_SPEC, [X_SAMPLE] * n, config, X_POVM, LOSS, [X_SAMPLE], a0=a0)


class CountingStream:
    def __init__(self, samples):
        self.samples = samples
        self.taken = 0

    def __iter__(self):
        for s in self.samples:
            self.taken += 1
            yield s


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"method": "adam"}, {"schedule": "cosine"}, {"eta": -0.1}, {"samples": 0}, {"shots": 0}, {"gamma": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**{"method": "qsgd", "samples": 10, **kwargs})

    def test_psr_budget_below_one_iteration(self):
        with pytest.raises(ValueError):
            TrainConfig("psr", 95, shots=1).iterations(48)

    @pytest.mark.parametrize("method, per", [("qsgd", 1), ("rqsgd", 1), ("exact", 1), ("psr", 192)])
    def test_samples_per_iteration(self, method, per):
        assert TrainConfig(method, 57600, shots=2).samples_per_iteration(48) == per

    def test_schedules(self):
        assert TrainConfig("qsgd", 10, eta=0.3).step_size(5, 100) == 0.3
        assert TrainConfig("qsgd", 10, schedule="decaying", beta=2, gamma0=3).step_size(5, 100) == 0.25
        assert TrainConfig("qsgd", 10, schedule="averaged", gamma=2).step_size(5, 100) == 0.05


class TestTrain:
    def test_zero_step_keeps_parameters(self):
        records = run_single_qubit("qsgd", 30, [0.4], eta=0.0, keep_snapshots=True)
        assert len({r.train_loss for r in records}) == 1
        assert all(np.array_equal(r.a_snapshot, [0.4]) for r in records)

    def test_exact_gradient_flow(self):
        records = run_single_qubit("exact", 200, [0.3], eta=0.1, keep_snapshots=True)
        losses = np.array([r.train_loss for r in records])
        a = np.array([r.a_snapshot[0] for r in records])
        assert np.allclose(losses, np.cos(a) ** 2, atol=1e-12)
        assert np.all(np.diff(losses) <= 0)
        assert losses[-1] < 1e-6 and abs(a[-1] - np.pi / 2) < 1e-3

    def test_exact_gradient_norm_trend(self):
        records = run_single_qubit("exact", 300, [np.pi / 2 - 0.5], eta=0.02)
        g = np.array([r.grad_norm_sq for r in records])
        smooth = np.convolve(g, np.ones(50) / 50, mode="valid")
        assert np.all(np.isfinite(g)) and np.all(np.diff(smooth) <= 1e-15)

    @pytest.mark.parametrize("method", ["qsgd", "rqsgd", "psr", "exact"])
    def test_sample_accounting(self, method):
        ex = experiment_spec("exp1")
        config = TrainConfig(method, 200, eta=0.05, shots=1, eval_every=3)
        stream = CountingStream(gen_exp1(400, np.random.default_rng(0)))
        records = train(ex.ansatz, stream, config, ex.povm, LOSS, gen_exp1(20, np.random.default_rng(1)))
        per = config.samples_per_iteration(48)
        assert records[-1].samples_used == stream.taken == (200 // per) * per
        assert [r.samples_used for r in records] == sorted(r.samples_used for r in records)
        assert records[-1].iter == 200 // per

    def test_exhausted_stream(self):
        with pytest.raises(ValueError):
            train(X_SPEC, [X_SAMPLE] * 5, TrainConfig("qsgd", 10), X_POVM, LOSS, [X_SAMPLE])

    @pytest.mark.parametrize("method", ["qsgd", "rqsgd", "psr"])
    def test_deterministic(self, method):
        ex = experiment_spec("exp1")
        data = gen_exp1(200, np.random.default_rng(0))
        config = TrainConfig(method, 200, eta=0.05, seed=3, eval_every=10)
        r1 = train(ex.ansatz, data, config, ex.povm, LOSS, data[:20])
        r2 = train(ex.ansatz, data, config, ex.povm, LOSS, data[:20])
        assert r1 == r2 and np.array_equal(final_params(r1), final_params(r2))

    def test_record_schedule(self):
        records = run_single_qubit("qsgd", 25, [0.1], eval_every=10)
        assert [r.iter for r in records] == [0, 10, 20, 25]
        assert records[-1].a_snapshot is not None and records[0].a_snapshot is None

    def test_initialization_range(self):
        ex = experiment_spec("exp1")
        config = TrainConfig("qsgd", 1, eta=0.0, keep_snapshots=True, seed=4)
        records = train(ex.ansatz, gen_exp1(1, np.random.default_rng(0)), config, ex.povm, LOSS,
                        gen_exp1(2, np.random.default_rng(0)))
        a = records[0].a_snapshot
        assert a.shape == (48,) and np.all(np.abs(a) <= 0.1)


class TestAveragedIterate:
    def test_constant(self):
        recs = [TrainRecord(t, t, 0, 1, 0, a_snapshot=np.array([0.5, 1.0])) for t in range(4)]
        assert np.array_equal(averaged_iterate(recs), [0.5, 1.0])

    def test_two(self):
        recs = [TrainRecord(0, 0, 0, 1, 0, a_snapshot=np.array([1.0])), TrainRecord(1, 1, 0, 1, 0, a_snapshot=np.array([2.0]))]
        assert averaged_iterate(recs) == pytest.approx([1.5])

    def test_no_snapshots(self):
        with pytest.raises(ValueError):
            averaged_iterate([TrainRecord(0, 0, 0, 1, 0)])

    def test_convex_averaged_schedule(self):
        # cos^2 a is convex on (pi/4, 3pi/4) with minimum 0 at pi/2
        n, gamma = 400, 1.0
        gaps = []
        for seed in range(50):
            records = run_single_qubit(
                "qsgd", n, [np.pi / 2 - 0.3], schedule="averaged", gamma=gamma, seed=seed, keep_snapshots=True
            )
            a_ave = averaged_iterate(records[:-1])[0]
            gaps.append(np.cos(a_ave) ** 2)
        assert max(gaps) <= gamma / math.sqrt(n)


class TestBounds:
    def test_qsgd_constant(self):
        assert bound_constant("qsgd", 48, 2) == pytest.approx(18 * 48 * math.sqrt(48), abs=0.1)

    def test_psr_constant(self):
        assert bound_constant("psr", 48, 2) == pytest.approx(4 * 48**2.5)

    def test_unit_arguments(self):
        assert bound_constant("qsgd", 1, 0) == 2

    def test_rqsgd_constant(self):
        assert bound_constant("rqsgd", 4, 1) == 32

    def test_report(self):
        r = convergence_bound("qsgd", 48, 2, 1.0, 57600, 0.1, 0.5)
        assert r.predicted_gap == pytest.approx(0.1 + r.C * 0.5 / (57600 * 0.1))
        assert r.T == 57600
        assert r.variants["summary"] == pytest.approx(48**1.5 * 9)
        assert r.variants["second-moment"] == pytest.approx(48**1.5 * 81)

    def test_psr_iterations(self):
        assert convergence_bound("psr", 48, 2, 1.0, 57600, 0.1, 0.5, m=2).T == 600

    @pytest.mark.parametrize("p", [1, 4, 48, 256, 10**4])
    def test_crossover(self, p):
        k = qsgd_crossover(p)
        assert bound_constant("qsgd", p, k + 1) >= bound_constant("psr", p, 0)
        if k >= 0:
            assert bound_constant("qsgd", p, k) < bound_constant("psr", p, 0)
        # 2 p^1.5 3^k < 4 p^2.5  <=>  k < log3(2p)
        assert k == math.ceil(math.log(2 * p, 3)) - 1

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.5])
    def test_invalid_eps(self, eps):
        with pytest.raises(ValueError):
            convergence_bound("qsgd", 4, 1, 1.0, 10, eps, 0.5)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            bound_constant("exact", 4, 1)


class TestLipschitz:
    @pytest.mark.parametrize("exp_id", ["exp1", "exp2-bell", "exp3"])
    def test_gradient_norm_below_constant(self, exp_id):
        ex = experiment_spec(exp_id)
        rng = np.random.default_rng(5)
        states = ex.generate(50, rng)
        measured = max_gradient_norm(ex.ansatz, ex.povm, LOSS, states, 1000, rng)
        assert measured <= lipschitz_constant(ex.ansatz.num_params, LOSS.l_max)


class TestHelstrom:
    def test_orthogonal(self):
        loss, acc = helstrom_ceiling([Sample([1, 0], -1), Sample([0, 1], 1)])
        assert loss == pytest.approx(0) and acc == pytest.approx(1)

    def test_indistinguishable(self, rng):
        rho = np.diag([0.3, 0.7]).astype(complex)
        assert helstrom_ceiling([Sample(rho, -1), Sample(rho, 1)])[0] == pytest.approx(0.5)

    def test_exp1_population_value(self):
        # mean of y rho over the exp1 mixture has trace norm (4 + sqrt 13) / 9
        analytic = (13 + math.sqrt(13)) / 18
        _, acc = helstrom_ceiling(gen_exp1(2000, np.random.default_rng(0)))
        assert acc == pytest.approx(analytic, abs=0.01)

    @pytest.mark.parametrize("exp_id, analytic", [("exp2-bell", 7 / 8), ("exp2", 7 / 8), ("exp3", 31 / 32)])
    def test_pure_vs_separable_population_value(self, exp_id, analytic):
        # the Ginibre mean is I/2, so mean(y rho) = (target - I/dim) / 2
        _, acc = helstrom_ceiling(experiment_spec(exp_id).generate(2000, np.random.default_rng(0)))
        assert acc == pytest.approx(analytic, abs=0.01)

    def test_empty(self):
        with pytest.raises(ValueError):
            helstrom_ceiling([])

    def test_bad_label(self):
        with pytest.raises(ValueError):
            helstrom_ceiling([Sample([1, 0], 0)])
