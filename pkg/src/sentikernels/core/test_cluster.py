"""Unit tests for k-means, self-organizing maps and cluster-size reports"""

import csv
import os
import shutil
import tempfile
import unittest

import numpy as np
from scipy.stats import spearmanr

from sentikernels.core.cluster import (
    COSINE,
    EUCLIDEAN,
    KMEANS,
    SOM,
    Codebook,
    SomConfig,
    assign,
    assign_many,
    cluster_size_report,
    kmeans_fit,
    load_codebook,
    near_square_grid,
    pool_vectors,
    save_codebook,
    som_fit,
    zipf_reference,
)
from sentikernels.core.embed import DocTokenVectors
from sentikernels.core.errors import ConfigError, DimMismatch, TooFewVectors, ZeroNormVector
from sentikernels.core.synthetic import zipf_mixture


class TestKMeans(unittest.TestCase):
    """Lloyd's algorithm"""

    def test_objective_non_increasing(self):
        """Test objective non increasing"""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            points = rng.normal(size=(int(rng.integers(30, 120)), int(rng.integers(2, 6))))
            history = []
            kmeans_fit(points, int(rng.integers(2, 8)), seed, objective_history=history)
            for before, after in zip(history, history[1:]):
                self.assertLessEqual(after, before * (1 + 1e-12) + 1e-12)

    def test_single_cluster_is_mean(self):
        """Test single cluster is mean"""
        points = np.random.default_rng(1).normal(size=(200, 4))
        codebook = kmeans_fit(points, 1, seed=0)
        np.testing.assert_allclose(codebook.centers[0], points.mean(axis=0), atol=1e-10)

    def test_two_pairs(self):
        """Test two pairs"""
        points = [[0, 0], [0, 1], [10, 10], [10, 11]]
        centers = kmeans_fit(points, 2, seed=3).centers
        centers = centers[np.argsort(centers[:, 0])]
        np.testing.assert_allclose(centers, [[0, 0.5], [10, 10.5]])

    def test_every_point_its_own_center(self):
        """Test every point its own center"""
        points = np.random.default_rng(2).normal(size=(7, 3))
        history = []
        codebook = kmeans_fit(points, 7, seed=0, objective_history=history)
        self.assertEqual(history[-1], 0.0)
        self.assertEqual(sorted(assign_many(codebook, points).tolist()), list(range(7)))

    def test_deterministic(self):
        """Test k-means with a fixed seed repeats its centers"""
        points = np.random.default_rng(4).normal(size=(100, 3))
        np.testing.assert_array_equal(kmeans_fit(points, 5, seed=9).centers,
                                      kmeans_fit(points, 5, seed=9).centers)

    def test_too_few_vectors(self):
        """Test too few vectors"""
        with self.assertRaises(TooFewVectors):
            kmeans_fit(np.zeros((3, 2)), 4, seed=0)


class TestSom(unittest.TestCase):
    """Self-organizing maps"""

    def test_grid_shapes(self):
        """Test grid shapes"""
        self.assertEqual(near_square_grid(500), (25, 20))
        self.assertEqual(near_square_grid(50), (10, 5))
        self.assertEqual(near_square_grid(7), (7, 1))
        self.assertEqual(SomConfig().radius_start, 12.5)

    def test_config_invariants(self):
        """Test config invariants"""
        with self.assertRaises(ConfigError):
            SomConfig(k=10, grid_rows=3, grid_cols=3)
        with self.assertRaises(ConfigError):
            SomConfig.for_k(4, learning_rate=0)
        with self.assertRaises(ConfigError):
            SomConfig.for_k(4, epochs=0)

    def test_single_unit_points_toward_mean_direction(self):
        """Test single unit points toward mean direction"""
        rng = np.random.default_rng(0)
        points = rng.normal(loc=[3.0, 1.0], scale=0.2, size=(100, 2))
        codebook = som_fit(points, SomConfig.for_k(1, epochs=20, seed=1))
        mean = points.mean(axis=0)
        cosine = codebook.centers[0] @ mean / (np.linalg.norm(codebook.centers[0]) * np.linalg.norm(mean))
        self.assertGreater(cosine, 0.99)
        self.assertEqual(codebook.assign_metric, COSINE)

    def test_deterministic(self):
        """Test SOM with a fixed seed repeats its centers"""
        points = np.random.default_rng(5).normal(size=(80, 3))
        config = SomConfig.for_k(6, epochs=3, seed=2)
        np.testing.assert_array_equal(som_fit(points, config).centers,
                                      som_fit(points, config).centers)

    def test_topology_preserved(self):
        """Test topology preserved"""
        rng = np.random.default_rng(3)
        angles = rng.uniform(0, np.pi / 2, 300)
        radii = rng.uniform(1, 2, 300)
        points = np.stack((radii * np.cos(angles), radii * np.sin(angles)), axis=1)
        codebook = som_fit(points, SomConfig(k=10, grid_rows=1, grid_cols=10, epochs=20, seed=4))
        bmu = assign_many(codebook, points)
        pairs = rng.integers(0, len(points), size=(500, 2))
        input_distance = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
        grid_distance = np.abs(bmu[pairs[:, 0]] - bmu[pairs[:, 1]])
        self.assertGreater(spearmanr(input_distance, grid_distance).correlation, 0)

    def test_rejections(self):
        """Test rejections"""
        with self.assertRaises(TooFewVectors):
            som_fit(np.ones((3, 2)), SomConfig.for_k(4))
        with self.assertRaises(ZeroNormVector):
            som_fit(np.array([[1.0, 0.0], [0.0, 0.0]]), SomConfig.for_k(2))

    def test_closer_to_zipf_than_kmeans(self):
        """Test SOM cluster sizes sit closer to Zipf than k-means ones"""
        som_l1, kmeans_l1 = [], []
        for seed in range(10):
            points, _ = zipf_mixture(seed=seed)
            som = som_fit(points, SomConfig.for_k(50, epochs=5, seed=seed))
            kmeans = kmeans_fit(points, 50, seed=seed)
            som_l1.append(cluster_size_report(som, points).zipf_l1)
            kmeans_l1.append(cluster_size_report(kmeans, points).zipf_l1)
        self.assertLess(np.median(som_l1), np.median(kmeans_l1))


class TestAssign(unittest.TestCase):
    """Nearest-center assignment"""

    def setUp(self):
        self.centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [9.0, 9.0], [2.0, 2.0],
                                 [-1.0, -1.0], [5.0, 5.0], [7.0, 1.0]])
        self.codebook = Codebook(KMEANS, self.centers, EUCLIDEAN)

    def test_exact_center(self):
        """Test exact center"""
        self.assertEqual(assign(self.codebook, [7.0, 1.0]), 7)

    def test_tie_goes_to_lowest_index(self):
        """Test tie goes to lowest index"""
        codebook = Codebook(KMEANS, [[0, 0], [1, 0], [2, 0], [3, 0], [4, 0], [5, 0]], EUCLIDEAN)
        self.assertEqual(assign(codebook, [3.5, 0.0]), 3)
        tie = Codebook(KMEANS, [[9, 9], [9, 8], [0, 1], [9, 7], [9, 6], [0, -1]], EUCLIDEAN)
        self.assertEqual(assign(tie, [0.0, 0.0]), 2)

    def test_cosine(self):
        """Test cosine assignment ignores vector length"""
        codebook = Codebook(SOM, [[1.0, 0.0], [0.0, 1.0]], COSINE)
        self.assertEqual(assign(codebook, [0.1, 5.0]), 1)
        with self.assertRaises(ZeroNormVector):
            assign(codebook, [0.0, 0.0])

    def test_dimension_mismatch(self):
        """Test dimension mismatch"""
        with self.assertRaises(DimMismatch):
            assign(self.codebook, [1.0, 2.0, 3.0])

    def test_metric_must_match_method(self):
        """Test metric must match method"""
        with self.assertRaises(ConfigError):
            Codebook(SOM, self.centers, EUCLIDEAN)


class TestReports(unittest.TestCase):
    """Cluster sizes against the Zipf reference"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_all_in_one_cluster(self):
        """Test every vector in one cluster"""
        codebook = Codebook(KMEANS, [[0, 0], [10, 0], [0, 10], [10, 10]], EUCLIDEAN)
        report = cluster_size_report(codebook, np.zeros((5, 2)))
        self.assertEqual(report.sizes_sorted, [5, 0, 0, 0])
        self.assertEqual(report.p, [1.0, 0.0, 0.0, 0.0])
        # reference cumulative shares 12/25, 18/25, 22/25, 1
        self.assertAlmostEqual(report.ks_statistic, 13 / 25)

    def test_uniform_over_two(self):
        """Test uniform over two"""
        codebook = Codebook(KMEANS, [[0.0], [10.0]], EUCLIDEAN)
        report = cluster_size_report(codebook, [[0.0], [10.0]])
        self.assertAlmostEqual(report.zipf_l1, 1 / 3)
        self.assertAlmostEqual(report.ks_statistic, 1 / 6)

    def test_exact_zipf(self):
        """Test exact Zipf"""
        codebook = Codebook(KMEANS, [[0.0], [10.0], [20.0]], EUCLIDEAN)
        # 6, 3, 2 points follow 1/r over 3 ranks exactly
        vectors = [[0.0]] * 6 + [[10.0]] * 3 + [[20.0]] * 2
        report = cluster_size_report(codebook, vectors)
        self.assertAlmostEqual(report.zipf_l1, 0.0)
        self.assertAlmostEqual(report.ks_statistic, 0.0)
        np.testing.assert_allclose(zipf_reference(3), [6 / 11, 3 / 11, 2 / 11])

    def test_csv(self):
        """Test the cluster-size CSV"""
        codebook = Codebook(KMEANS, [[0.0], [10.0]], EUCLIDEAN)
        path = os.path.join(self.test_dir, 'sizes.csv')
        cluster_size_report(codebook, [[0.0], [0.0], [10.0]]).write_csv(path)
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ['rank', 'size', 'p_r', 'q_r'])
        self.assertEqual(rows[1][:2], ['1', '2'])

    def test_codebook_file(self):
        """Test codebook file"""
        path = os.path.join(self.test_dir, 'codebook.cbk')
        codebook = Codebook(SOM, np.random.default_rng(0).normal(size=(6, 3)), COSINE, seed=4,
                            grid=(3, 2), config={'epochs': 7})
        save_codebook(codebook, path)
        loaded = load_codebook(path)
        self.assertEqual((loaded.method, loaded.grid, loaded.seed), (SOM, (3, 2), 4))
        np.testing.assert_array_equal(loaded.centers, codebook.centers)

    def test_pool_subsampling(self):
        """Test pool subsampling"""
        docs = [DocTokenVectors(f"d{i}", np.full((5, 2), float(i))) for i in range(4)]
        pool, subsampled_from = pool_vectors(docs, cap=100, seed=0)
        self.assertEqual((len(pool), subsampled_from), (20, None))
        pool, subsampled_from = pool_vectors(docs, cap=8, seed=0)
        self.assertEqual((len(pool), subsampled_from), (8, 20))


if __name__ == '__main__':
    unittest.main()
