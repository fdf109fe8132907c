import unittest

import numpy as np

from egmrank.errors import DataError
from egmrank.spectral import SpectralMatrix
from egmrank.svdcore import SingularProfile, decompose, rank_estimate, svd_profile


def _orthonormal(n, k, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, k)))
    return q


class TestDecompose(unittest.TestCase):
    def test_matches_lapack(self):
        for shape in ((7, 5), (5, 7), (20, 130)):
            matrix = np.abs(np.random.default_rng(sum(shape)).normal(size=shape))
            dec = decompose(matrix)

            expected = np.linalg.svd(matrix, compute_uv=False)
            np.testing.assert_allclose(dec.sigma, expected, rtol=1e-10, atol=1e-12)
            self.assertLessEqual(dec.reconstruction_residual(), 1e-10)
            k = min(shape)
            np.testing.assert_allclose(dec.u.T @ dec.u, np.eye(k), atol=1e-10)
            np.testing.assert_allclose(dec.vt @ dec.vt.T, np.eye(k), atol=1e-10)

    def test_known_singular_values(self):
        left, right = _orthonormal(6, 2, 0), _orthonormal(9, 2, 1)
        matrix = left @ np.diag([3.0, 1.0]) @ right.T
        dec = decompose(matrix)

        np.testing.assert_allclose(dec.sigma[:2], [3.0, 1.0], rtol=1e-12)
        self.assertLess(np.max(dec.sigma[2:]), 1e-12)

    def test_identity(self):
        np.testing.assert_allclose(decompose(np.eye(4)).sigma, np.ones(4), rtol=1e-14)

    def test_zero_matrix(self):
        dec = decompose(np.zeros((3, 5)))
        np.testing.assert_array_equal(dec.sigma, np.zeros(3))
        self.assertEqual(dec.reconstruction_residual(), 0.0)

    def test_invalid_input(self):
        with self.assertRaises(DataError):
            decompose(np.array([[1.0, np.nan]]))
        with self.assertRaises(DataError):
            decompose(np.ones(4))
        with self.assertRaises(DataError):
            decompose(np.zeros((0, 3)))


class TestProfile(unittest.TestCase):
    def test_rank_one(self):
        u = np.abs(np.random.default_rng(5).normal(size=10)) + 0.1
        v = np.abs(np.random.default_rng(6).normal(size=130)) + 0.1
        profile = svd_profile(np.outer(u, v))

        self.assertEqual(profile.normalized[0], 1.0)
        self.assertLess(profile.sigma2, 1e-10)
        self.assertEqual(profile.rank_estimate, 1)

    def test_rank_two(self):
        matrix = _orthonormal(10, 2, 2) @ np.diag([2.0, 0.5]) @ _orthonormal(40, 2, 3).T
        profile = svd_profile(matrix)

        self.assertAlmostEqual(profile.sigma2, 0.25, places=12)
        self.assertEqual(profile.rank_estimate, 2)
        self.assertEqual(len(profile), 10)

    def test_spectral_matrix_input(self):
        values = np.abs(np.random.default_rng(7).normal(size=(4, 6)))
        matrix = SpectralMatrix(values, np.arange(1.0, 7.0))
        np.testing.assert_allclose(
            svd_profile(matrix).sigmas, np.linalg.svd(values, compute_uv=False), rtol=1e-10
        )

    def test_zero_and_single_row(self):
        zero = svd_profile(np.zeros((3, 8)))
        np.testing.assert_array_equal(zero.normalized, np.zeros(3))
        self.assertEqual((zero.sigma2, zero.rank_estimate), (0.0, 0))

        single = svd_profile(np.ones((1, 8)))
        self.assertEqual(single.sigma2, 0.0)
        self.assertEqual(single.rank_estimate, 1)

    def test_gram_eigenvalue_oracle(self):
        for seed in range(100):
            matrix = np.random.default_rng(seed).uniform(0.0, 1.0, (9, 130))
            dec = decompose(matrix)
            oracle = np.sqrt(np.clip(np.linalg.eigvalsh(matrix @ matrix.T)[::-1], 0.0, None))

            np.testing.assert_allclose(dec.sigma, oracle, rtol=0.0, atol=1e-9 * oracle[0])
            self.assertLess(dec.reconstruction_residual(), 1e-12)

    def test_row_and_column_order_do_not_matter(self):
        rng = np.random.default_rng(11)
        matrix = np.abs(rng.normal(size=(9, 130)))
        base = svd_profile(matrix)

        for _ in range(10):
            shuffled = matrix[rng.permutation(9)][:, rng.permutation(130)]
            np.testing.assert_allclose(
                svd_profile(shuffled).normalized, base.normalized, rtol=0.0, atol=1e-12
            )

    def test_global_scaling_does_not_matter(self):
        matrix = np.abs(np.random.default_rng(12).normal(size=(9, 130)))
        base = svd_profile(matrix)

        for scale in (1e-6, 0.37, 250.0, 1e6):
            np.testing.assert_allclose(
                svd_profile(scale * matrix).normalized, base.normalized, rtol=0.0, atol=1e-12
            )

    def test_rank_estimate(self):
        profile = SingularProfile([1.0, 0.3, 1e-12])

        self.assertEqual(rank_estimate(profile), 2)
        self.assertEqual(rank_estimate(profile, 0.5), 1)
        self.assertEqual(rank_estimate(profile, 1e-13), 3)
        with self.assertRaises(DataError):
            rank_estimate(profile, 1.5)

    def test_validation_and_dict(self):
        with self.assertRaises(DataError):
            SingularProfile([1.0, 2.0])
        with self.assertRaises(DataError):
            SingularProfile([1.0, -0.1])

        profile = SingularProfile([4.0, 1.0], rel_tol=0.3)
        again = SingularProfile._from_dict(profile.to_dict())
        np.testing.assert_array_equal(again.normalized, [1.0, 0.25])
        self.assertEqual(again.rank_estimate, 1)


if __name__ == "__main__":
    unittest.main()
