"""Vector quantization of word embeddings with k-means or self-organizing maps"""

import csv
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from tqdm import tqdm

from sentikernels.core.errors import (
    ConfigError,
    DimMismatch,
    FormatError,
    TooFewVectors,
    ZeroNormVector,
)

logger = logging.getLogger(__name__)

# Tunable Parameters
# -----------------
# Number of clusters
DEFAULT_K = 500
# Lloyd iterations before giving up on convergence
KMEANS_MAX_ITER = 300
# Largest token-vector pool a codebook is fit on; larger pools are subsampled
POOL_CAP = 2_000_000
# Rows scored at once during batch assignment
ASSIGN_CHUNK = 4096

KMEANS = 'kmeans'
SOM = 'som'
EUCLIDEAN = 'euclidean'
COSINE = 'cosine'

CODEBOOK_MAGIC = b'CBK1'
_U32 = struct.Struct('<I')
_SHAPE = struct.Struct('<II')


def near_square_grid(k):
    """(rows, cols) with rows * cols = k and cols the largest divisor <= sqrt(k)"""
    cols = max(d for d in range(1, int(math.isqrt(k)) + 1) if k % d == 0)
    return k // cols, cols


@dataclass(frozen=True)
class SomConfig:
    """SOM hyperparameters; radius defaults to max(rows, cols) / 2 decaying to 0.5"""
    k: int = DEFAULT_K
    grid_rows: int = 25
    grid_cols: int = 20
    learning_rate: float = 0.25
    epochs: int = 200
    seed: int = 0
    radius_start: Optional[float] = None
    radius_end: float = 0.5

    def __post_init__(self):
        if self.grid_rows * self.grid_cols != self.k:
            raise ConfigError(
                f"SOM grid {self.grid_rows}x{self.grid_cols} does not have k={self.k} units")
        if self.learning_rate <= 0:
            raise ConfigError(f"SOM learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"SOM epochs must be >= 1, got {self.epochs}")
        if self.radius_start is None:
            object.__setattr__(self, 'radius_start', max(self.grid_rows, self.grid_cols) / 2)
        if self.radius_start <= 0 or self.radius_end <= 0:
            raise ConfigError("SOM radii must be > 0")

    @classmethod
    def for_k(cls, k, **overrides):
        """Config with a near-square grid for k units"""
        rows, cols = near_square_grid(k)
        return cls(k=k, grid_rows=rows, grid_cols=cols, **overrides)

    def to_dict(self):
        return asdict(self)


@dataclass
class Codebook:
    """k cluster representatives plus the metric used to assign vectors to them"""
    method: str
    centers: np.ndarray
    assign_metric: str
    seed: int = 0
    grid: Optional[Tuple[int, int]] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        expected = COSINE if self.method == SOM else EUCLIDEAN
        if self.method not in (KMEANS, SOM):
            raise ConfigError(f"Unknown clustering method {self.method!r}")
        if self.assign_metric != expected:
            raise ConfigError(f"{self.method} codebooks assign with {expected} distance")
        if self.centers.ndim != 2 or not np.all(np.isfinite(self.centers)):
            raise FormatError("Codebook centers must be a finite k x dim matrix")

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


def _as_matrix(vectors):
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimMismatch(f"Expected a 2-D array of vectors, got shape {matrix.shape}")
    return matrix


def _check_nonzero(matrix):
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise ZeroNormVector(f"Vector {int(np.argmin(norms))} has zero norm under cosine distance")


def _distances(points, centers, metric):
    distances = cdist(points, centers, 'sqeuclidean' if metric == EUCLIDEAN else 'cosine')
    # a zero-norm center has undefined cosine distance and never wins
    return np.nan_to_num(distances, nan=np.inf)


def assign_many(codebook, vectors):
    """Cluster index per row; lowest index wins ties"""
    matrix = _as_matrix(vectors)
    if matrix.shape[0] and matrix.shape[1] != codebook.dim:
        raise DimMismatch(f"Vector dimension {matrix.shape[1]} != codebook dimension {codebook.dim}")
    if codebook.assign_metric == COSINE:
        _check_nonzero(matrix)
    labels = np.empty(matrix.shape[0], dtype=np.int64)
    for start in range(0, matrix.shape[0], ASSIGN_CHUNK):
        chunk = matrix[start:start + ASSIGN_CHUNK]
        labels[start:start + len(chunk)] = np.argmin(
            _distances(chunk, codebook.centers, codebook.assign_metric), axis=1)
    return labels


def assign(codebook, v):
    """Index of the nearest center (Euclidean) or most similar unit (cosine)"""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != codebook.dim:
        raise DimMismatch(f"Vector of shape {v.shape} for a {codebook.dim}-dim codebook")
    return int(assign_many(codebook, v[None, :])[0])


def _kmeans_plusplus(points, k, rng):
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = cdist(points, points[chosen], 'sqeuclidean')[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            candidate = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center
            remaining = np.setdiff1d(np.arange(n), chosen)
            candidate = int(rng.choice(remaining))
        chosen.append(candidate)
        closest = np.minimum(closest, cdist(points, points[[candidate]], 'sqeuclidean')[:, 0])
    return points[chosen].copy()


def _nearest(points, centers):
    labels = np.empty(len(points), dtype=np.int64)
    dist = np.empty(len(points))
    for start in range(0, len(points), ASSIGN_CHUNK):
        d = cdist(points[start:start + ASSIGN_CHUNK], centers, 'sqeuclidean')
        idx = np.argmin(d, axis=1)
        labels[start:start + len(idx)] = idx
        dist[start:start + len(idx)] = d[np.arange(len(idx)), idx]
    return labels, dist


def kmeans_fit(vectors, k, seed, max_iter=KMEANS_MAX_ITER, objective_history=None):
    """Lloyd's algorithm with k-means++ seeding

    Args:
        objective_history: optional list that receives the sum of squared
            distances after every assignment step
    """
    points = _as_matrix(vectors)
    if len(points) < k:
        raise TooFewVectors(f"{len(points)} vectors cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centers = _kmeans_plusplus(points, k, rng)
    labels = None
    for iteration in range(max_iter):
        new_labels, dist = _nearest(points, centers)
        if objective_history is not None:
            objective_history.append(float(dist.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            logger.info("k-means converged after %d iterations", iteration)
            break
        labels = new_labels

        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        sizes = np.bincount(labels, minlength=k)
        nonempty = sizes > 0
        centers[nonempty] = sums[nonempty] / sizes[nonempty, None]
        if not np.all(nonempty):
            # re-seed each empty cluster with the point farthest from its center
            spread = np.sum((points - centers[labels]) ** 2, axis=1)
            for empty in np.flatnonzero(~nonempty):
                far = int(np.argmax(spread))
                centers[empty] = points[far]
                spread[far] = -1.0
            logger.debug("k-means iteration %d: re-seeded %d empty clusters",
                         iteration, int(np.sum(~nonempty)))
    else:
        logger.warning("k-means stopped after max_iter=%d without converging", max_iter)
    return Codebook(KMEANS, centers, EUCLIDEAN, seed=seed, config={'k': k, 'max_iter': max_iter})


def grid_coordinates(rows, cols):
    """(row, col) of every unit, unit u at (u // cols, u % cols)"""
    units = np.arange(rows * cols)
    return np.stack((units // cols, units % cols), axis=1).astype(np.float64)


def som_radius(config, epoch):
    """Neighborhood radius for an epoch, linear from radius_start to radius_end"""
    if config.epochs == 1:
        return config.radius_start
    return config.radius_start + (config.radius_end - config.radius_start) * epoch / (config.epochs - 1)


def som_fit(vectors, config):
    """Online SOM: cosine best-matching unit, Gaussian grid neighborhood, constant learning rate"""
    points = _as_matrix(vectors)
    if len(points) < config.k:
        raise TooFewVectors(f"{len(points)} vectors cannot initialize {config.k} SOM units")
    _check_nonzero(points)
    rng = np.random.default_rng(config.seed)
    weights = points[rng.choice(len(points), size=config.k, replace=False)].copy()
    coords = grid_coordinates(config.grid_rows, config.grid_cols)
    grid_sq = cdist(coords, coords, 'sqeuclidean')

    for epoch in tqdm(range(config.epochs), desc='som epochs', disable=None):
        sigma = som_radius(config, epoch)
        neighborhood = np.exp(-grid_sq / (2.0 * sigma * sigma)) * config.learning_rate
        for index in rng.permutation(len(points)):
            x = points[index]
            bmu = int(np.argmin(_distances(x[None, :], weights, COSINE)[0]))
            weights += neighborhood[bmu][:, None] * (x - weights)
        logger.debug("SOM epoch %d/%d done (radius %.3f)", epoch + 1, config.epochs, sigma)
    return Codebook(SOM, weights, COSINE, seed=config.seed,
                    grid=(config.grid_rows, config.grid_cols), config=config.to_dict())


def pool_vectors(docs, cap=POOL_CAP, seed=0):
    """Stack the token vectors of training documents, uniformly subsampled to cap

    Returns (pool, subsampled_from) where subsampled_from is the original pool
    size, or None when no subsampling happened.
    """
    parts = [doc.vectors for doc in docs if len(doc)]
    if not parts:
        raise TooFewVectors("Training documents contain no token vectors")
    pool = np.vstack(parts)
    if len(pool) <= cap:
        return pool, None
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(pool), size=cap, replace=False))
    logger.warning("Subsampled the clustering pool from %d to %d vectors", len(pool), cap)
    return pool[keep], len(pool)


def zipf_reference(k, exponent=1.0):
    """q_r = r^-s / sum_j j^-s for ranks 1..k"""
    weights = 1.0 / np.arange(1, k + 1, dtype=np.float64) ** exponent
    return weights / weights.sum()


@dataclass
class ClusterSizeReport:
    """Cluster occupancy sorted by size, compared with the Zipf reference"""
    sizes_sorted: List[int]
    p: List[float]
    q: List[float]
    zipf_l1: float
    ks_statistic: float
    subsampled_from: Optional[int] = None

    def to_dict(self):
        return asdict(self)

    def write_csv(self, path):
        """rank, size, p_r, q_r rows, ready to plot"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['rank', 'size', 'p_r', 'q_r'])
            for rank, (size, p, q) in enumerate(zip(self.sizes_sorted, self.p, self.q), start=1):
                writer.writerow([rank, size, repr(p), repr(q)])


def cluster_size_report(codebook, vectors, exponent=1.0, subsampled_from=None):
    """Sorted occupancy counts and their distance to the Zipf distribution

    `zipf_l1` sums |p_r - q_r| over ranks. `ks_statistic` is the largest gap
    between the cumulative shares, max_r |P(rank <= r) - Q(rank <= r)|, the
    Kolmogorov-Smirnov distance of the two rank distributions.
    """
    labels = assign_many(codebook, vectors)
    sizes = np.sort(np.bincount(labels, minlength=codebook.k))[::-1]
    total = sizes.sum()
    p = sizes / total if total else np.zeros(codebook.k)
    q = zipf_reference(codebook.k, exponent)
    zipf_l1 = float(np.abs(p - q).sum())
    ks = float(np.max(np.abs(np.cumsum(p) - np.cumsum(q)))) if total else 0.0
    return ClusterSizeReport([int(s) for s in sizes], [float(v) for v in p],
                             [float(v) for v in q], zipf_l1, ks, subsampled_from)


def save_codebook(codebook, path):
    """JSON header followed by the centers in the kernel-cache numeric layout"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = json.dumps({
        'method': codebook.method,
        'k': codebook.k,
        'dim': codebook.dim,
        'grid': list(codebook.grid) if codebook.grid else None,
        'metric': codebook.assign_metric,
        'seed': codebook.seed,
        'config': codebook.config,
    }, sort_keys=True).encode('utf-8')
    tmp_path = path + '.tmp'
    with open(tmp_path, 'wb') as f:
        f.write(CODEBOOK_MAGIC)
        f.write(_U32.pack(len(header)))
        f.write(header)
        f.write(_SHAPE.pack(codebook.k, codebook.dim))
        f.write(np.ascontiguousarray(codebook.centers, dtype='<f8').tobytes())
    os.replace(tmp_path, path)


def load_codebook(path):
    """Inverse of save_codebook"""
    with open(path, 'rb') as f:
        if f.read(len(CODEBOOK_MAGIC)) != CODEBOOK_MAGIC:
            raise FormatError(f"{path} is not a codebook file")
        (length,) = _U32.unpack(f.read(_U32.size))
        try:
            header = json.loads(f.read(length).decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable codebook header") from e
        rows, cols = _SHAPE.unpack(f.read(_SHAPE.size))
        data = f.read(rows * cols * 8)
    if len(data) != rows * cols * 8:
        raise FormatError(f"{path}: truncated center block")
    centers = np.frombuffer(data, dtype='<f8').reshape(rows, cols).astype(np.float64)
    grid = tuple(header['grid']) if header.get('grid') else None
    return Codebook(header['method'], centers, header['metric'], seed=header.get('seed', 0),
                    grid=grid, config=header.get('config', {}))
