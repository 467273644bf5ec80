"""Histogram intersection string kernel over character n-grams"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse
from tqdm import tqdm

from sentikernels.core.kernel import KernelMatrix, mirror_lower

logger = logging.getLogger(__name__)

# Tunable Parameters
# -----------------
# n-gram lengths blended into the kernel
DEFAULT_NGRAMS = (3, 4, 5)
# Rows per work unit when assembling a kernel matrix
ROW_BLOCK_SIZE = 256


@dataclass
class NgramHistogram:
    """Occurrence counts of the length-n windows of a string"""
    n: int
    counts: Counter = field(default_factory=Counter)

    def total(self):
        return sum(self.counts.values())


def extract_ngrams(text, n):
    """Count every contiguous length-n character window of text"""
    if n < 1:
        raise ValueError(f"n-gram length must be >= 1, got {n}")
    return NgramHistogram(n, Counter(text[i:i + n] for i in range(len(text) - n + 1)))


def _intersection(a, b):
    if len(a.counts) > len(b.counts):
        a, b = b, a
    other = b.counts
    return sum(min(count, other[gram]) for gram, count in a.counts.items() if gram in other)


def _check_range(n_range):
    n_range = sorted(set(int(n) for n in n_range))
    if not n_range:
        raise ValueError("n_range must not be empty")
    return n_range


def hisk_value(x, y, n_range):
    """Sum over n of sum over n-grams g of min(#(x, g), #(y, g))"""
    total = 0
    for n in _check_range(n_range):
        total += _intersection(extract_ngrams(x, n), extract_ngrams(y, n))
    return total


def self_similarities(docs, n_range=DEFAULT_NGRAMS):
    """k(x, x) per document: every window matches itself, so it is the window count"""
    n_range = _check_range(n_range)
    return np.array([sum(max(0, len(doc) - n + 1) for n in n_range) for doc in docs],
                    dtype=np.float64)


def _level_features(docs, n_range, vocabulary):
    """Binary (n-gram, level) indicators whose dot product is the intersection kernel

    A count c of n-gram g becomes the features (g, 1) .. (g, c), so
    sum_t [#(x,g) >= t][#(y,g) >= t] = min(#(x,g), #(y,g)).
    """
    indptr = [0]
    indices = []
    for doc in docs:
        for n in n_range:
            for gram, count in extract_ngrams(doc, n).counts.items():
                for level in range(1, count + 1):
                    indices.append(vocabulary.setdefault((gram, level), len(vocabulary)))
        indptr.append(len(indices))
    return indptr, indices


def _to_csr(indptr, indices, n_columns):
    data = np.ones(len(indices), dtype=np.int64)
    return sparse.csr_matrix(
        (data, np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, n_columns))


def _block_product(rows, cols):
    return np.asarray((rows @ cols.T).toarray(), dtype=np.int64)


def _row_blocks(n_rows, block_size):
    return [(start, min(start + block_size, n_rows)) for start in range(0, n_rows, block_size)]


def compute_hisk_matrix(docs, n_range=DEFAULT_NGRAMS, ids=None, jobs=1, block_size=ROW_BLOCK_SIZE):
    """Square HISK matrix; lower triangle accumulated in int64, then mirrored"""
    docs = list(docs)
    if not docs:
        raise ValueError("compute_hisk_matrix needs at least one document")
    n_range = _check_range(n_range)
    ids = list(ids) if ids is not None else [str(i) for i in range(len(docs))]
    vocabulary = {}
    features = _to_csr(*_level_features(docs, n_range, vocabulary), len(vocabulary))
    logger.info("HISK: %d documents, %d (n-gram, level) features, n=%s",
                len(docs), len(vocabulary), n_range)

    blocks = _row_blocks(len(docs), block_size)
    results = Parallel(n_jobs=jobs)(
        delayed(_block_product)(features[start:stop], features[:stop])
        for start, stop in tqdm(blocks, desc='hisk rows', disable=None))
    counts = np.zeros((len(docs), len(docs)), dtype=np.int64)
    for (start, stop), block in zip(blocks, results):
        counts[start:stop, :stop] = block
    values = mirror_lower(counts).astype(np.float64)
    recipe = {'kernel': 'hisk', 'ngrams': n_range, 'normalized': False}
    return KernelMatrix.square(ids, values, recipe)


def compute_hisk_cross(row_docs, col_docs, n_range=DEFAULT_NGRAMS, row_ids=None, col_ids=None,
                       jobs=1, block_size=ROW_BLOCK_SIZE):
    """HISK block between two document sets, e.g. test rows against training columns"""
    row_docs = list(row_docs)
    col_docs = list(col_docs)
    n_range = _check_range(n_range)
    row_ids = list(row_ids) if row_ids is not None else [str(i) for i in range(len(row_docs))]
    col_ids = list(col_ids) if col_ids is not None else [str(i) for i in range(len(col_docs))]
    vocabulary = {}
    col_parts = _level_features(col_docs, n_range, vocabulary)
    row_parts = _level_features(row_docs, n_range, vocabulary)
    cols = _to_csr(*col_parts, len(vocabulary))
    rows = _to_csr(*row_parts, len(vocabulary))

    blocks = _row_blocks(len(row_docs), block_size)
    results = Parallel(n_jobs=jobs)(
        delayed(_block_product)(rows[start:stop], cols)
        for start, stop in tqdm(blocks, desc='hisk cross rows', disable=None))
    values = np.zeros((len(row_docs), len(col_docs)), dtype=np.float64)
    for (start, stop), block in zip(blocks, results):
        values[start:stop] = block
    recipe = {'kernel': 'hisk', 'ngrams': n_range, 'normalized': False}
    return KernelMatrix(tuple(row_ids), tuple(col_ids), values, recipe)
