"""Tensor algebra: coordinates, eigen decomposition, physicality classification."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtensor2d import tensors
from qtensor2d.tensors import Region

from conftest import random_interior_z, random_rotation


def _char_poly_eigenvalues(z: np.ndarray) -> np.ndarray:
    """Independent oracle: roots of det(Q - x I) via the companion matrix.

    For a traceless matrix the characteristic polynomial is
    x^3 - (tr(Q^2)/2) x - det(Q).
    """
    m = tensors.z_to_matrix(z)
    j2 = 0.5 * np.trace(m @ m)
    det = np.linalg.det(m)
    roots = np.roots([1.0, 0.0, -j2, -det])
    return np.sort(roots.real)


class TestCoordinates:
    def test_round_trip(self, rng):
        z = rng.standard_normal((40, 5))
        back = tensors.matrix_to_z(tensors.z_to_matrix(z))
        np.testing.assert_allclose(back, z, rtol=0, atol=1e-15)

    def test_matrix_entries(self):
        z = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        m = tensors.z_to_matrix(z)
        expected = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, -5.0]])
        np.testing.assert_array_equal(m, expected)
        assert abs(np.trace(m)) == 0.0

    def test_matrix_to_z_rejects_asymmetric(self):
        m = np.diag([1.0, 1.0, -2.0])
        m[0, 1] = 0.5
        with pytest.raises(ValueError, match="symmetric"):
            tensors.matrix_to_z(m)

    def test_matrix_to_z_rejects_trace(self):
        with pytest.raises(ValueError, match="traceless"):
            tensors.matrix_to_z(np.eye(3))

    def test_frobenius_matches_matrix_norm(self, rng):
        z = rng.standard_normal((25, 5))
        m = tensors.z_to_matrix(z)
        np.testing.assert_allclose(
            tensors.frobenius_sq(z), np.sum(m * m, axis=(-2, -1)), rtol=1e-14
        )


class TestUniaxial:
    def test_half_strength_along_e3(self):
        z = tensors.uniaxial(0.5, np.array([0.0, 0.0, 1.0]))
        lam = tensors.eigenvalues(z)
        np.testing.assert_allclose(lam, [-1.0 / 6.0, -1.0 / 6.0, 1.0 / 3.0], atol=1e-15)
        verdict = tensors.classify(z)
        assert verdict.region is Region.INTERIOR
        assert verdict.margin == pytest.approx(1.0 / 6.0, abs=1e-15)

    def test_director_normalized(self):
        z1 = tensors.uniaxial(0.3, np.array([2.0, 0.0, 0.0]))
        z2 = tensors.uniaxial(0.3, np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(z1, z2, atol=1e-15)

    def test_zero_director_rejected(self):
        with pytest.raises(ValueError, match="director"):
            tensors.uniaxial(0.3, np.zeros(3))


class TestEigenvalues:
    def test_against_char_poly_oracle(self, rng):
        for _ in range(300):
            z = rng.standard_normal(5)
            lam = tensors.eigenvalues(z)
            np.testing.assert_allclose(lam, _char_poly_eigenvalues(z), atol=1e-10)
            assert abs(lam.sum()) < 1e-12

    def test_against_lapack(self, rng):
        z = rng.standard_normal((200, 5))
        lam = tensors.eigenvalues(z)
        ref = np.linalg.eigvalsh(tensors.z_to_matrix(z))
        np.testing.assert_allclose(lam, ref, atol=1e-12)

    def test_isotropic(self):
        np.testing.assert_array_equal(tensors.eigenvalues(np.zeros(5)), np.zeros(3))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(5)
        rot = random_rotation(rng)
        np.testing.assert_allclose(
            tensors.eigenvalues(tensors.rotate(z, rot)),
            tensors.eigenvalues(z),
            atol=1e-12,
        )


class TestEigensystem:
    def test_reconstruction(self, rng):
        for _ in range(100):
            z = rng.standard_normal(5)
            sys = tensors.eigensystem(z)
            m = tensors.z_to_matrix(z)
            np.testing.assert_allclose(
                m @ sys.frame, sys.frame * sys.lambdas[None, :], atol=1e-9
            )
            np.testing.assert_allclose(sys.frame.T @ sys.frame, np.eye(3), atol=1e-12)

    def test_deterministic(self, rng):
        z = rng.standard_normal(5)
        a = tensors.eigensystem(z)
        b = tensors.eigensystem(z)
        assert np.array_equal(a.frame, b.frame)
        assert np.array_equal(a.lambdas, b.lambdas)

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_degenerate_uniaxial(self, axis):
        n = np.eye(3)[axis]
        z = tensors.uniaxial(0.4, n)
        sys = tensors.eigensystem(z)
        m = tensors.z_to_matrix(z)
        np.testing.assert_allclose(
            m @ sys.frame, sys.frame * sys.lambdas[None, :], atol=1e-12
        )
        np.testing.assert_allclose(sys.frame.T @ sys.frame, np.eye(3), atol=1e-12)
        # the simple eigenvalue 2s/3 sits in the last slot, eigenvector +/- n
        assert abs(abs(sys.frame[:, 2] @ n) - 1.0) < 1e-12

    def test_isotropic_frame_is_identity(self):
        sys = tensors.eigensystem(np.zeros(5))
        np.testing.assert_array_equal(sys.frame, np.eye(3))


class TestClassify:
    def test_zero_is_interior_with_third_margin(self):
        verdict = tensors.classify(np.zeros(5))
        assert verdict.region is Region.INTERIOR
        assert verdict.margin == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_boundary_state(self):
        z = tensors.matrix_to_z(np.diag([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]))
        assert tensors.classify(z).region is Region.BOUNDARY

    def test_exterior_state(self):
        z = tensors.matrix_to_z(np.diag([0.7, -0.35, -0.35]))
        verdict = tensors.classify(z)
        assert verdict.region is Region.EXTERIOR
        assert verdict.margin < 0.0

    def test_negative_tol_rejected(self):
        with pytest.raises(ValueError, match="tol"):
            tensors.classify(np.zeros(5), tol=-1.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_margin_concavity_on_segments(self, seed, t):
        """The physical set is convex: margins are concave along segments."""
        rng = np.random.default_rng(seed)
        za = random_interior_z(rng, min_margin=0.01)
        zb = random_interior_z(rng, min_margin=0.01)
        ma = tensors.margins(za)
        mb = tensors.margins(zb)
        mix = tensors.margins(t * za + (1.0 - t) * zb)
        assert mix >= t * ma + (1.0 - t) * mb - 1e-12


class TestSampling:
    def test_rotations_are_proper_orthonormal(self, rng):
        rots = tensors.random_rotations(rng, 50)
        eye = np.broadcast_to(np.eye(3), (50, 3, 3))
        np.testing.assert_allclose(rots @ np.swapaxes(rots, -1, -2), eye, atol=1e-12)
        np.testing.assert_allclose(np.linalg.det(rots), 1.0, atol=1e-12)

    def test_sample_states_respects_margin_floor(self, rng):
        zs = tensors.sample_states(rng, 200, min_margin=0.05)
        assert zs.shape == (200, 5)
        assert float(tensors.margins(zs).min()) >= 0.05 - 1e-12

    def test_boundary_fraction_lands_on_boundary(self, rng):
        zs = tensors.sample_states(rng, 100, boundary_fraction=0.4)
        m = tensors.margins(zs)
        assert np.abs(m[:40]).max() < 1e-9
        assert m.min() > -1e-9

    def test_sampler_validation(self, rng):
        with pytest.raises(ValueError):
            tensors.sample_states(rng, 5, min_margin=0.4)
        with pytest.raises(ValueError):
            tensors.sample_states(rng, 5, boundary_fraction=1.5)
        with pytest.raises(ValueError):
            tensors.sample_states(rng, 5, min_margin=0.1, boundary_fraction=0.5)
