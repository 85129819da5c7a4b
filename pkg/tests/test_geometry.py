"""Array geometry and compression operator tests."""

import math

import numpy as np
import pytest

from subswap.geometry import (
    CompressionOperator,
    ElementPositions,
    coprime_positions,
    dense_positions,
    identity_compressor,
    random_whitened_compressor,
    selection_compressor,
    steering_matrix,
    steering_vector,
)


def _brute_force_union(m1, m2):
    return sorted({k * m1 for k in range(2 * m2)} | {k * m2 for k in range(m1)})


class TestPositions:
    def test_must_start_at_zero(self):
        with pytest.raises(ValueError):
            ElementPositions((1, 2, 3))

    def test_must_increase(self):
        with pytest.raises(ValueError):
            ElementPositions((0, 2, 2))

    def test_dense(self):
        pos = dense_positions(5)
        assert pos.positions == (0, 1, 2, 3, 4)
        assert pos.aperture == 4

    def test_json_round_trip(self):
        pos = ElementPositions((0, 2, 7))
        assert ElementPositions.from_json(pos.to_json()) == pos


class TestCoprime:
    def test_fig2_pattern(self):
        pos = coprime_positions(11, 9)
        assert len(pos) == 28
        assert pos.aperture == 187

    def test_twelve_element_pattern(self):
        pos = coprime_positions(5, 4)
        assert len(pos) == 12
        assert pos.aperture == 35

    def test_degenerate_pair(self):
        pos = coprime_positions(1, 1)
        assert pos.positions == (0, 1)

    def test_non_coprime_rejected(self):
        with pytest.raises(ValueError):
            coprime_positions(6, 9)

    def test_cardinality_sweep_against_brute_force(self):
        rng = np.random.default_rng(7)
        found = 0
        while found < 25:
            m1 = int(rng.integers(1, 20))
            m2 = int(rng.integers(1, 20))
            if math.gcd(m1, m2) != 1:
                continue
            found += 1
            pos = coprime_positions(m1, m2)
            assert list(pos.positions) == _brute_force_union(m1, m2)
            assert len(pos) == m1 + 2 * m2 - 1
            assert pos.aperture == (2 * m2 - 1) * m1


class TestSteering:
    def test_broadside_is_ones(self):
        pos = ElementPositions((0, 1, 2))
        assert np.allclose(steering_vector(pos, 0.0), np.ones(3))

    def test_alternating_at_pi(self):
        pos = ElementPositions((0, 1))
        assert np.allclose(steering_vector(pos, math.pi), [1.0, -1.0])

    def test_phases_follow_positions(self):
        pos = ElementPositions((0, 2, 5))
        vec = steering_vector(pos, math.pi / 4)
        assert np.allclose(np.abs(vec), 1.0)
        assert np.allclose(
            np.angle(vec), [0.0, math.pi / 2, 5 * math.pi / 4 - 2 * math.pi]
        )

    def test_matrix_columns(self):
        pos = dense_positions(4)
        mat = steering_matrix(pos, [0.1, -0.3])
        assert mat.shape == (4, 2)
        assert np.allclose(mat[:, 1], steering_vector(pos, -0.3))


class TestSelectionCompressor:
    def test_full_selection_is_identity(self):
        psi = selection_compressor(dense_positions(6), 6)
        assert np.allclose(psi.matrix, np.eye(6))

    def test_coprime_twelve_of_36(self):
        psi = selection_compressor(coprime_positions(5, 4), 36)
        assert psi.matrix.shape == (12, 36)
        assert psi.kind == "selection"

    def test_coprime_28_of_188(self):
        psi = selection_compressor(coprime_positions(11, 9), 188)
        assert psi.matrix.shape == (28, 188)
        assert 188 / 28 == pytest.approx(6.7, abs=0.02)

    def test_rows_orthonormal_exactly(self):
        psi = selection_compressor(coprime_positions(5, 2), 16)
        gram = psi.matrix @ psi.matrix.conj().T
        assert np.array_equal(gram, np.eye(8, dtype=complex))

    def test_out_of_range_position(self):
        with pytest.raises(ValueError):
            selection_compressor(coprime_positions(5, 4), 30)

    def test_selection_preserves_selected_entries(self):
        rng = np.random.default_rng(3)
        psi = selection_compressor(coprime_positions(5, 2), 16)
        vec = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        picked = psi.apply(vec)
        assert np.array_equal(picked, vec[list(psi.source_positions.positions)])

    def test_json_round_trip(self):
        psi = selection_compressor(coprime_positions(3, 2), 10)
        again = CompressionOperator.from_json(psi.to_json())
        assert np.allclose(again.matrix, psi.matrix)
        assert again.kind == psi.kind
        assert again.source_positions == psi.source_positions


class TestRandomCompressor:
    def test_square_case_unitary(self):
        psi = random_whitened_compressor(4, 4, seed=5)
        assert np.allclose(
            psi.matrix @ psi.matrix.conj().T, np.eye(4), atol=1e-10
        )
        assert np.allclose(
            psi.matrix.conj().T @ psi.matrix, np.eye(4), atol=1e-10
        )

    def test_rows_orthonormal(self):
        psi = random_whitened_compressor(2, 8, seed=9)
        assert np.allclose(psi.matrix @ psi.matrix.conj().T, np.eye(2), atol=1e-10)

    def test_deterministic_given_seed(self):
        a = random_whitened_compressor(3, 12, seed=123)
        b = random_whitened_compressor(3, 12, seed=123)
        assert np.array_equal(a.matrix, b.matrix)

    def test_different_seeds_differ(self):
        a = random_whitened_compressor(3, 12, seed=123)
        b = random_whitened_compressor(3, 12, seed=124)
        assert np.linalg.norm(a.matrix - b.matrix) > 1e-6

    def test_expansion_rejected(self):
        with pytest.raises(ValueError):
            random_whitened_compressor(9, 4, seed=1)


class TestOperatorValidation:
    def test_non_orthonormal_rejected(self):
        bad = np.ones((2, 4), dtype=complex)
        with pytest.raises(ValueError):
            CompressionOperator(bad, "selection")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            CompressionOperator(np.eye(3), "magic")

    def test_identity_helper(self):
        psi = identity_compressor(5)
        assert psi.kind == "identity"
        assert np.array_equal(psi.matrix, np.eye(5, dtype=complex))

    def test_orthonormality_property_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(4, 24))
            m = int(rng.integers(1, n + 1))
            psi = random_whitened_compressor(m, n, seed=int(rng.integers(1 << 30)))
            gram = psi.matrix @ psi.matrix.conj().T
            assert np.allclose(gram, np.eye(m), atol=1e-10)
