"""Unit tests for kernel normalization, fusion and the KMAT1 cache format"""

import os
import shutil
import struct
import tempfile
import unittest

import numpy as np

from sentikernels.core.errors import DegenerateDiagonal, FormatError, ManifestMismatch
from sentikernels.core.kernel import (
    KernelMatrix,
    fuse_kernels,
    load_kernel,
    normalize_cross,
    normalize_kernel,
    save_kernel,
)


def square(values, ids=None, **recipe):
    values = np.asarray(values, dtype=np.float64)
    ids = ids or [f"s{i}" for i in range(len(values))]
    return KernelMatrix.square(ids, values, recipe)


class TestNormalize(unittest.TestCase):
    """K'_ij = K_ij / sqrt(K_ii K_jj)"""

    def test_examples(self):
        """Test normalization on small matrices"""
        np.testing.assert_allclose(normalize_kernel(square([[4, 2], [2, 1]])).values,
                                   [[1, 1], [1, 1]])
        np.testing.assert_array_equal(normalize_kernel(square(np.eye(2))).values, np.eye(2))
        np.testing.assert_allclose(normalize_kernel(square([[3, 2], [2, 3]])).values,
                                   [[1, 2 / 3], [2 / 3, 1]])

    def test_idempotent_and_symmetric(self):
        """Test idempotent and symmetric"""
        rng = np.random.default_rng(0)
        a = rng.normal(size=(8, 5))
        once = normalize_kernel(square(a @ a.T))
        twice = normalize_kernel(once)
        np.testing.assert_allclose(once.values, twice.values, atol=1e-12)
        np.testing.assert_array_equal(once.values, once.values.T)
        np.testing.assert_array_equal(once.diagonal(), np.ones(8))
        self.assertTrue(once.recipe['normalized'])

    def test_degenerate_diagonal(self):
        """Test degenerate diagonal"""
        with self.assertRaises(DegenerateDiagonal):
            normalize_kernel(square([[0, 0], [0, 1]]))

    def test_zero_diagonal_allowed(self):
        """Test zero diagonal allowed"""
        kernel = normalize_kernel(square([[0, 0], [0, 4]]), allow_zero_diagonal=True)
        np.testing.assert_array_equal(kernel.values, np.eye(2))

    def test_cross_block_matches_square(self):
        """Test cross block matches square"""
        rng = np.random.default_rng(1)
        a = rng.normal(size=(6, 4))
        full = a @ a.T
        kernel = KernelMatrix(('r0', 'r1'), ('c0', 'c1', 'c2', 'c3'), full[:2, 2:])
        diag = np.diag(full)
        cross = normalize_cross(kernel, diag[:2], diag[2:])
        np.testing.assert_allclose(cross.values, normalize_kernel(square(full)).values[:2, 2:])

    def test_cross_kernel_rejected(self):
        """Test cross kernel rejected"""
        kernel = KernelMatrix(('a',), ('b',), np.ones((1, 1)))
        with self.assertRaises(ManifestMismatch):
            normalize_kernel(kernel)


class TestFuse(unittest.TestCase):
    """Summation of kernels over the same samples"""

    def test_identity_sum(self):
        """Test fusing identities"""
        identity = square(np.eye(3), normalized=True)
        np.testing.assert_array_equal(fuse_kernels([identity]).values, np.eye(3))
        np.testing.assert_array_equal(fuse_kernels([identity, identity]).values, 2 * np.eye(3))

    def test_entrywise(self):
        """Test fusion adds entries"""
        rng = np.random.default_rng(4)
        a = square(rng.random((4, 4)), normalized=True)
        b = square(rng.random((4, 4)), normalized=True)
        fused = fuse_kernels([a, b])
        np.testing.assert_array_equal(fused.values, a.values + b.values)
        self.assertEqual(len(fused.recipe['fused']), 2)

    def test_manifest_mismatch(self):
        """Test manifest mismatch"""
        a = square(np.eye(2), ['x', 'y'])
        b = square(np.eye(2), ['y', 'x'])
        with self.assertRaises(ManifestMismatch):
            fuse_kernels([a, b])

    def test_unnormalized_warning(self):
        """Test unnormalized warning"""
        with self.assertLogs('sentikernels.core.kernel', level='WARNING'):
            fuse_kernels([square(np.eye(2), normalized=False), square(np.eye(2), normalized=True)])


class TestKernelFile(unittest.TestCase):
    """KMAT1 read/write"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, 'k.kmat')

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_layout(self):
        """Test KMAT1 byte layout"""
        kernel = KernelMatrix(('a', 'b'), ('c', 'd', 'e'), np.arange(6, dtype=np.float64).reshape(2, 3),
                              {'kernel': 'hisk'})
        save_kernel(kernel, self.path)
        with open(self.path, 'rb') as f:
            data = f.read()
        self.assertEqual(data[:5], b'KMAT1')
        self.assertEqual(struct.unpack('<II', data[5:13]), (2, 3))
        self.assertEqual(struct.unpack('<6d', data[13:61]), (0.0, 1.0, 2.0, 3.0, 4.0, 5.0))

        loaded = load_kernel(self.path)
        self.assertEqual(loaded.row_ids, ('a', 'b'))
        self.assertEqual(loaded.col_ids, ('c', 'd', 'e'))
        self.assertEqual(loaded.recipe, {'kernel': 'hisk'})
        np.testing.assert_array_equal(loaded.values, kernel.values)

    def test_memory_mapped(self):
        """Test memory-mapped loading"""
        kernel = square(np.eye(3) * 2)
        save_kernel(kernel, self.path)
        loaded = load_kernel(self.path, mmap=True)
        self.assertIsInstance(loaded.values, np.memmap)
        np.testing.assert_array_equal(loaded.values, kernel.values)

    def test_bad_magic(self):
        """Test bad magic"""
        with open(self.path, 'wb') as f:
            f.write(b'NOPE!' + bytes(8))
        with self.assertRaises(FormatError):
            load_kernel(self.path)


if __name__ == '__main__':
    unittest.main()
