import numpy as np
import pytest
from conftest import Sample
from hypothesis import given
from hypothesis import strategies as st

from qsgd.ansatz import AnsatzSpec, LossFn, Layer, Povm, loss_observable, prepare_input, zero_one_loss
from qsgd.gradients import (
    commutator_gradient,
    exact_gradient,
    finite_difference_gradient,
    hadamard_test_distribution,
    hadamard_test_sample,
    hadamard_test_value,
    loss_is_constant,
    nonproduct_gradient_expansion,
    psr_exact_difference,
    psr_gradient,
    qsgd_gradient,
    rqsgd_estimate,
    shadow_gradient,
    tilde_gradients,
)
from qsgd.qcore import PauliString
from qsgd.shadows import ShadowSnapshot, brute_force_expectation, shadow_matrix
from qsgd.verify import _instance, expansion_error, kappa_instance

LOSS = zero_one_loss()
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)
# U = exp(iaX) on |0>, label +1 and M_{+1} = |1><1|, so L(a) = cos^2 a
X_SPEC = AnsatzSpec(1, (Layer((PauliString.from_label("X"),)),))
X_POVM = Povm((-1, 1), (P0, P1))
X_SAMPLE = Sample([1, 0], 1)


def seeds(n=20):
    return pytest.mark.parametrize("seed", range(n))


def exhaustive_hadamard_mean(spec, a, sample, povm, j):
    dist = hadamard_test_distribution(spec, a, sample.state, povm, j)
    return sum(p * hadamard_test_value(sample.label, yh, z, LOSS) for (yh, z), p in dist.items())


class TestExactGradient:
    @pytest.mark.parametrize("a, expected", [(np.pi / 4, -1.0), (0.0, 0.0), (0.3, -np.sin(0.6))])
    def test_single_qubit_closed_form(self, a, expected):
        g = exact_gradient(X_SPEC, [a], X_SAMPLE, X_POVM, LOSS)
        assert g.values[0] == pytest.approx(expected, abs=1e-12)
        assert g.samples_consumed == 0

    @seeds()
    def test_matches_finite_difference(self, seed):
        spec, povm, sample, a = _instance(seed, 2)
        g = exact_gradient(spec, a, sample, povm, LOSS).values
        fd = finite_difference_gradient(spec, a, sample, povm, LOSS, h=1e-5).values
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-3)

    @seeds(5)
    def test_pauli_and_dense_engines_agree(self, seed):
        spec, povm, sample, a = _instance(seed, 3, fixed=False)
        rho = prepare_input(sample.state, spec.num_qubits)
        obs = loss_observable(povm, LOSS, sample.label)
        fast = commutator_gradient(spec, a, rho, obs, engine="pauli")
        dense = commutator_gradient(spec, a, rho, obs, engine="dense")
        assert np.allclose(fast, dense, atol=1e-12)

    def test_rejects_single_exponential(self):
        spec = AnsatzSpec(1, (Layer((PauliString.from_label("X"),)),), form="single-exponential")
        with pytest.raises(ValueError):
            exact_gradient(spec, [0.1], X_SAMPLE, X_POVM, LOSS)


class TestFiniteDifference:
    def test_second_order_truncation(self):
        a = [0.3]
        exact = -np.sin(0.6)
        e1 = abs(finite_difference_gradient(X_SPEC, a, X_SAMPLE, X_POVM, LOSS, h=1e-3).values[0] - exact)
        e2 = abs(finite_difference_gradient(X_SPEC, a, X_SAMPLE, X_POVM, LOSS, h=5e-4).values[0] - exact)
        assert 3.5 < e1 / e2 < 4.5

    @pytest.mark.parametrize("h", [1e-8, 0.1])
    def test_step_range(self, h):
        with pytest.raises(ValueError):
            finite_difference_gradient(X_SPEC, [0.0], X_SAMPLE, X_POVM, LOSS, h=h)


class TestConstantLoss:
    povm = Povm((-1, 1), (np.eye(2) / 2, np.eye(2) / 2))

    def test_detects_constant(self):
        flat = LossFn({(1, -1): 0.5, (1, 1): 0.5, (-1, -1): 0.5, (-1, 1): 0.5})
        assert loss_is_constant(X_POVM, flat, 1)
        assert not loss_is_constant(X_POVM, LOSS, 1)

    def test_fd_is_zero_for_outcome_independent_povm(self):
        fd = finite_difference_gradient(X_SPEC, [0.4], X_SAMPLE, self.povm, LOSS).values
        assert np.allclose(fd, 0, atol=1e-10)

    def test_hadamard_zero_when_prediction_always_right(self, rng):
        povm = Povm((-1, 1), (np.zeros((2, 2)), np.eye(2)))
        assert all(hadamard_test_sample(X_SPEC, [0.7], X_SAMPLE, povm, LOSS, 0, rng) == 0 for _ in range(50))

    def test_all_estimators_zero(self, rng):
        flat = LossFn({(1, -1): 1.0, (1, 1): 1.0, (-1, -1): 1.0, (-1, 1): 1.0})
        assert np.all(exact_gradient(X_SPEC, [0.4], X_SAMPLE, X_POVM, flat).values == 0)
        assert np.all(qsgd_gradient(X_SPEC, [0.4], X_SAMPLE, X_POVM, flat, rng).values == 0)
        assert rqsgd_estimate(X_SPEC, [0.4], X_SAMPLE, X_POVM, flat, rng)[1] == 0
        batch = [X_SAMPLE] * 2
        assert np.all(psr_gradient(X_SPEC, [0.4], batch, X_POVM, flat, 1, rng).values == 0)


class TestHadamardTest:
    @seeds()
    def test_exhaustive_mean_is_gradient(self, seed):
        spec, povm, sample, a = _instance(400 + seed, 2)
        g = exact_gradient(spec, a, sample, povm, LOSS).values
        for j in range(spec.num_params):
            assert exhaustive_hadamard_mean(spec, a, sample, povm, j) == pytest.approx(g[j], abs=1e-10)

    @seeds(5)
    def test_distribution_normalized(self, seed):
        spec, povm, sample, a = _instance(seed, 2)
        dist = hadamard_test_distribution(spec, a, sample.state, povm, 0)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
        assert min(dist.values()) > -1e-12

    def test_values_bounded(self, rng):
        spec, povm, sample, a = _instance(3, 2)
        vals = [hadamard_test_sample(spec, a, sample, povm, LOSS, 0, rng) for _ in range(200)]
        assert max(abs(v) for v in vals) <= 2 * LOSS.l_max

    def test_bad_index(self):
        with pytest.raises(IndexError):
            hadamard_test_distribution(X_SPEC, [0.1], X_SAMPLE.state, X_POVM, 1)

    def test_monte_carlo_within_five_sigma(self, rng):
        a = [0.3]
        n = 40_000
        draws = np.array([hadamard_test_sample(X_SPEC, a, X_SAMPLE, X_POVM, LOSS, 0, rng) for _ in range(n)])
        assert abs(draws.mean() + np.sin(0.6)) < 5 * draws.std() / np.sqrt(n)


class TestRqsgd:
    def test_single_parameter_is_hadamard(self):
        j, g = rqsgd_estimate(X_SPEC, [0.3], X_SAMPLE, X_POVM, LOSS, np.random.default_rng(5))
        assert j == 0 and g in (-2.0, 0.0, 2.0)

    def test_coordinates_uniform(self, rng):
        _, povm, sample, _ = _instance(11, 2)
        spec = AnsatzSpec(2, (Layer(tuple(PauliString.from_label(s) for s in ("XI", "IZ", "YY", "ZX"))),))
        a = np.zeros(4)
        n, p = 20_000, 4
        counts = np.bincount([rqsgd_estimate(spec, a, sample, povm, LOSS, rng)[0] for _ in range(n)], minlength=p)
        sigma = np.sqrt(n * (1 / p) * (1 - 1 / p))
        assert np.all(np.abs(counts - n / p) < 3.5 * sigma)

    @seeds()
    def test_scaled_estimate_unbiased(self, seed):
        spec, povm, sample, a = _instance(500 + seed, 2)
        p = spec.num_params
        # coordinate j is drawn with probability 1/p and its estimate scaled by p
        mean = np.array([(1 / p) * p * exhaustive_hadamard_mean(spec, a, sample, povm, j) for j in range(p)])
        assert np.allclose(mean, exact_gradient(spec, a, sample, povm, LOSS).values, atol=1e-10)


class TestParameterShift:
    @seeds()
    def test_infinite_shot_identity(self, seed):
        spec, povm, sample, a = _instance(600 + seed, 2)
        assert np.allclose(
            psr_exact_difference(spec, a, sample, povm, LOSS),
            exact_gradient(spec, a, sample, povm, LOSS).values,
            atol=1e-10,
        )

    def test_symmetric_optimum(self):
        assert psr_exact_difference(X_SPEC, [np.pi / 2], X_SAMPLE, X_POVM, LOSS)[0] == pytest.approx(0, abs=1e-12)

    def test_many_shots_within_five_sigma(self, rng):
        spec, povm, sample, a = _instance(7, 2)
        p, m = spec.num_params, 10_000
        est = psr_gradient(spec, a, [sample] * (2 * m * p), povm, LOSS, m, rng)
        exact = exact_gradient(spec, a, sample, povm, LOSS).values
        assert est.samples_consumed == 2 * m * p
        assert np.all(np.abs(est.values - exact) <= 5 * np.sqrt(4 * LOSS.l_max**2 / m))

    def test_empty_batch(self, rng):
        with pytest.raises(ValueError):
            psr_gradient(X_SPEC, [0.0], [], X_POVM, LOSS, 1, rng)

    def test_short_batch(self, rng):
        with pytest.raises(ValueError):
            psr_gradient(X_SPEC, [0.0], [X_SAMPLE], X_POVM, LOSS, 1, rng)

    def test_seeded_determinism(self):
        spec, povm, sample, a = _instance(8, 2)
        batch = [sample] * (4 * spec.num_params)
        r1 = psr_gradient(spec, a, batch, povm, LOSS, 2, np.random.default_rng(3)).values
        r2 = psr_gradient(spec, a, batch, povm, LOSS, 2, np.random.default_rng(3)).values
        assert np.array_equal(r1, r2)


class TestQsgd:
    @seeds()
    def test_exhaustive_unbiased(self, seed):
        spec, povm, sample, a = _instance(500 + seed, 2)
        mean = brute_force_expectation(
            sample.state, lambda s: shadow_gradient(spec, a, s, sample.label, povm, LOSS)
        )
        assert np.allclose(mean, exact_gradient(spec, a, sample, povm, LOSS).values, atol=1e-10)

    def test_deterministic_z_snapshot(self):
        spec, povm, _, a = _instance(2, 2)
        snap = ShadowSnapshot((0, 0), (1, 0))
        shadow = Sample(shadow_matrix(snap).dense, 1)
        g = shadow_gradient(spec, a, snap, 1, povm, LOSS)
        assert np.allclose(g, exact_gradient(spec, a, shadow, povm, LOSS).values, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_dense_and_factored_paths_agree(self, seed):
        spec, povm, sample, a = _instance(seed, 2)
        g = np.random.default_rng(seed)
        snap = ShadowSnapshot(tuple(int(v) for v in g.integers(0, 3, 2)), tuple(int(b) for b in g.integers(0, 2, 2)))
        dense = shadow_gradient(spec, a, snap, sample.label, povm, LOSS, path="dense")
        factored = shadow_gradient(spec, a, snap, sample.label, povm, LOSS, path="factored")
        assert np.allclose(dense, factored, atol=1e-12)

    @seeds(10)
    def test_second_moment_bound(self, seed):
        spec, povm, sample, a = _instance(800 + seed, 2)
        k = spec.num_qubits
        second = brute_force_expectation(
            sample.state, lambda s: float(np.sum(shadow_gradient(spec, a, s, sample.label, povm, LOSS) ** 2))
        )
        assert second <= 4 * spec.num_params * 9**k * LOSS.l_max**2

    def test_one_sample_per_call(self, rng):
        spec, povm, sample, a = _instance(1, 2)
        est = qsgd_gradient(spec, a, sample, povm, LOSS, rng)
        assert est.samples_consumed == 1 and est.method == "qsgd"
        assert qsgd_gradient(spec, a, sample, povm, LOSS, rng, shadows_per_sample=3).method == "qsgd-nonphysical"

    def test_monte_carlo_within_five_sigma(self, rng):
        spec, povm, sample, a = _instance(9, 2)
        n = 20_000
        draws = np.array([qsgd_gradient(spec, a, sample, povm, LOSS, rng).values for _ in range(n)])
        exact = exact_gradient(spec, a, sample, povm, LOSS).values
        band = 5 * draws.std(axis=0) / np.sqrt(n) + 1e-12
        assert np.all(np.abs(draws.mean(axis=0) - exact) <= band)


class TestNonproductExpansion:
    def test_zero_parameters_return_tilde(self):
        spec, povm, sample, _ = kappa_instance(700, 2)
        a = np.zeros(spec.num_params)
        tilde = tilde_gradients(spec, a, sample, povm, LOSS)
        out = nonproduct_gradient_expansion(spec.generators, a, tilde)
        assert np.allclose(out, [tilde[g.letters] for g in spec.generators], atol=1e-15)

    def test_single_generator_first_order_vanishes(self):
        spec = AnsatzSpec(1, (Layer((PauliString.from_label("X"),)),), form="single-exponential")
        a = [0.2]
        tilde = tilde_gradients(spec, a, X_SAMPLE, X_POVM, LOSS)
        out = nonproduct_gradient_expansion(spec.generators, a, tilde)
        assert out[0] == pytest.approx(tilde[(1,)], abs=1e-14)
        assert out[0] == pytest.approx(-np.sin(0.4), abs=1e-12)

    def test_duplicate_generators(self):
        x = PauliString.from_label("X")
        with pytest.raises(ValueError):
            nonproduct_gradient_expansion([x, x], [0.1, 0.1], {})

    def test_two_generator_cubic_decay(self):
        spec = AnsatzSpec(
            1, (Layer((PauliString.from_label("X"), PauliString.from_label("Z"))),), form="single-exponential"
        )
        sample = Sample(np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]]), 1)
        povm = Povm((-1, 1), (P0, P1))
        direction = np.array([0.6, 0.8])
        ratio = expansion_error(spec, povm, sample, 0.1 * direction) / expansion_error(
            spec, povm, sample, 0.05 * direction
        )
        assert 6 <= ratio <= 10
