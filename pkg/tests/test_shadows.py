import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsgd import shadows
from qsgd.qcore import X, Z, kron, partial_trace
from qsgd.shadows import (
    OMEGA,
    ShadowSnapshot,
    brute_force_expectation,
    brute_force_variance,
    estimate_observable,
    gamma0,
    gamma0_inv_pure,
    local_shadow,
    sample_snapshot,
    shadow_matrix,
    trace_with_factors,
)
from qsgd.verify import random_density, random_hermitian

KET0 = np.array([1, 0], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
PLUS_MATRIX = np.array([[0.5, 1.5], [1.5, 0.5]])
BELL = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


class TestChannel:
    def test_unital(self):
        assert np.allclose(gamma0(np.eye(2)), np.eye(2))

    def test_shrinks_z(self):
        assert np.allclose(gamma0(Z), Z / 3)

    def test_projector(self):
        assert np.allclose(gamma0(np.diag([1.0, 0.0])), (np.eye(2) + Z / 3) / 2)

    def test_inverse_on_zero(self):
        assert np.allclose(gamma0_inv_pure(KET0), np.diag([2, -1]))

    def test_inverse_on_plus(self):
        assert np.allclose(gamma0_inv_pure(PLUS), PLUS_MATRIX)

    @given(st.integers(0, 2**32 - 1))
    def test_inverse_undoes_channel(self, seed):
        rho = random_density(np.random.default_rng(seed), 1)
        # gamma0(B) = (B + tr(B) I) / 3 on 2x2, so its inverse is 3B - tr(B) I
        assert np.allclose(3 * gamma0(rho) - np.eye(2), rho, atol=1e-14)

    def test_eigenket_set(self):
        kets = {tuple(np.round(OMEGA[v][b], 12)) for v in range(3) for b in range(2)}
        expected = [KET0, np.array([0, 1]), PLUS, np.array([1, -1]) / np.sqrt(2),
                    np.array([1, -1j]) / np.sqrt(2), np.array([1, 1j]) / np.sqrt(2)]
        assert kets == {tuple(np.round(np.asarray(k, dtype=complex), 12)) for k in expected}


class TestSnapshots:
    def test_z_basis_on_zero(self, rng):
        for _ in range(20):
            assert sample_snapshot(np.diag([1.0, 0.0]), rng, bases=(0,)).bits == (0,)

    def test_bell_z_bits_correlated(self, rng):
        bits = {sample_snapshot(BELL, rng, bases=(0, 0)).bits for _ in range(200)}
        assert bits <= {(0, 0), (1, 1)} and len(bits) == 2

    def test_basis_frequencies_uniform(self, rng):
        counts = np.zeros(3)
        for _ in range(100_000):
            counts[sample_snapshot(KET0, rng).bases[0]] += 1
        assert np.all(np.abs(counts / counts.sum() - 1 / 3) < 0.01)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ShadowSnapshot((3,), (0,))
        with pytest.raises(ValueError):
            ShadowSnapshot((0, 1), (0,))

    def test_bytes_round_trip(self):
        snap = ShadowSnapshot((2, 0, 1), (1, 1, 0))
        assert ShadowSnapshot.from_bytes(*snap.to_bytes()) == snap


class TestShadowMatrix:
    def test_single_qubit(self):
        assert np.allclose(shadow_matrix(ShadowSnapshot((0,), (0,))).dense, np.diag([2, -1]))

    def test_two_qubit_tensor(self):
        dense = shadow_matrix(ShadowSnapshot((0, 1), (0, 0))).dense
        assert np.allclose(dense, np.kron(np.diag([2, -1]), PLUS_MATRIX))

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1)), min_size=1, max_size=4))
    def test_unit_trace(self, pairs):
        snap = ShadowSnapshot(*zip(*pairs))
        assert np.trace(shadow_matrix(snap).dense) == pytest.approx(1.0)

    def test_local_shadow(self, rng):
        snap = sample_snapshot(random_density(rng, 4), rng)
        dense = shadow_matrix(snap).dense
        assert np.allclose(local_shadow(snap, range(4)), dense)
        assert np.allclose(local_shadow(snap, [2]), shadow_matrix(snap).factors[2])
        assert np.allclose(local_shadow(snap, [1, 3]), partial_trace(dense, [0, 2]))

    def test_local_shadow_bad_index(self):
        with pytest.raises(ValueError):
            local_shadow(ShadowSnapshot((0,), (0,)), [1])

    @given(st.integers(0, 2**32 - 1))
    def test_factored_trace_matches_dense(self, seed):
        g = np.random.default_rng(seed)
        snap = sample_snapshot(random_density(g, 3), g)
        op = random_hermitian(g, 8)
        assert trace_with_factors(op, shadow_matrix(snap).factors) == pytest.approx(
            np.trace(op @ shadow_matrix(snap).dense), abs=1e-10
        )


class TestEstimation:
    def test_identity_observable(self, rng):
        snaps = [sample_snapshot(random_density(rng, 2), rng) for _ in range(10)]
        assert estimate_observable(snaps, np.eye(2), [1]) == pytest.approx(1.0, abs=1e-14)

    def test_z_on_zero(self):
        f = lambda s: trace_with_factors(Z, shadow_matrix(s).factors[[0]]).real
        assert brute_force_expectation(np.diag([1.0, 0.0]), f) == pytest.approx(1.0, abs=1e-12)

    def test_xx_on_bell(self):
        f = lambda s: trace_with_factors(kron(X, X), shadow_matrix(s).factors).real
        assert brute_force_expectation(BELL, f) == pytest.approx(1.0, abs=1e-12)

    def test_support_too_large(self, rng):
        snaps = [sample_snapshot(KET0, rng)]
        with pytest.raises(ValueError):
            estimate_observable(snaps, np.eye(4), [0, 1])

    def test_constant_function(self, rng):
        assert brute_force_expectation(random_density(rng, 2), lambda s: 1.0) == pytest.approx(1.0)

    def test_maximally_mixed_symmetry(self):
        f = lambda s: np.trace(Z @ shadow_matrix(s).dense).real
        assert brute_force_expectation(np.eye(2) / 2, f) == pytest.approx(0.0, abs=1e-14)

    def test_enumeration_limit(self):
        with pytest.raises(ValueError):
            brute_force_expectation(np.eye(16) / 16, lambda s: 1.0)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_unbiased_dense(self, d, rng):
        rho = random_density(rng, d)
        mean = brute_force_expectation(rho, lambda s: shadow_matrix(s).dense)
        assert np.max(np.abs(mean - rho)) < 1e-10

    def test_monte_carlo_within_five_sigma(self, rng):
        rho = random_density(rng, 2)
        m = random_hermitian(rng, 2)
        f = lambda s: trace_with_factors(m, shadow_matrix(s).factors[[1]]).real
        exact = brute_force_expectation(rho, f)
        var = brute_force_variance(rho, f)
        n = 100_000
        snaps = [sample_snapshot(rho, rng) for _ in range(n)]
        est = estimate_observable(snaps, m, [1])
        assert abs(est - exact) < 5 * np.sqrt(var / n)


def test_sign_flip_canary(monkeypatch):
    """Breaking the inverse channel must break unbiasedness."""
    original = shadows.gamma0_inv_pure
    monkeypatch.setattr(shadows, "gamma0_inv_pure", lambda w: -original(w))
    # an odd qubit count, since per-factor sign flips cancel in pairs
    rho = random_density(np.random.default_rng(0), 3)
    mean = brute_force_expectation(rho, lambda s: shadow_matrix(s).dense)
    assert np.max(np.abs(mean - rho)) > 0.1
