"""Bag-of-word-embeddings histograms and the PQ rank-correlation kernel"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from sentikernels.core.cluster import assign_many
from sentikernels.core.errors import DimMismatch, FormatError
from sentikernels.core.kernel import KernelMatrix, mirror_lower, normalize_cross, normalize_kernel

logger = logging.getLogger(__name__)

# Rows per work unit when assembling a PQ matrix
ROW_BLOCK_SIZE = 64


@dataclass
class BoweHistogram:
    """h_i = number of the document's token vectors assigned to cluster i"""
    doc_id: str
    h: np.ndarray

    def to_dict(self):
        return {'doc_id': self.doc_id, 'h': [int(v) for v in self.h]}


def build_histogram(doc_vectors, codebook):
    """Count the document's token vectors per cluster"""
    if len(doc_vectors) == 0:
        return BoweHistogram(doc_vectors.doc_id, np.zeros(codebook.k, dtype=np.int32))
    labels = assign_many(codebook, doc_vectors.vectors)
    return BoweHistogram(doc_vectors.doc_id,
                         np.bincount(labels, minlength=codebook.k).astype(np.int32))


def build_histograms(docs, codebook):
    return [build_histogram(doc, codebook) for doc in tqdm(docs, desc='bowe', disable=None)]


def _tied_pairs(values):
    _, counts = np.unique(values, return_counts=True, axis=0)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(values):
    """Pairs i < j with values[i] > values[j]; equal values are not inversions"""
    values = list(values)
    n = len(values)
    buffer = [0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if values[i] <= values[j]:
                    buffer[k] = values[i]
                    i += 1
                else:
                    buffer[k] = values[j]
                    inversions += mid - i
                    j += 1
                k += 1
            buffer[k:k + mid - i] = values[i:mid]
            k += mid - i
            buffer[k:k + hi - j] = values[j:hi]
            values[lo:hi] = buffer[lo:hi]
        width *= 2
    return inversions


def pq_kernel_value(h, g):
    """Sum over ordered pairs i != j of sign(h_i - h_j) * sign(g_i - g_j), i.e. 2 (P - Q)

    Concordant (P) and discordant (Q) pair counts come from tie groups and a
    merge-sort inversion count, in O(k log k).
    """
    h = np.asarray(h, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    if h.shape != g.shape or h.ndim != 1:
        raise DimMismatch(f"Histogram lengths differ: {h.shape} vs {g.shape}")
    k = len(h)
    if k < 2:
        return 0
    all_pairs = k * (k - 1) // 2
    tied_h = _tied_pairs(h)
    tied_g = _tied_pairs(g)
    tied_both = _tied_pairs(np.stack((h, g), axis=1))
    # sorted by h then g, so pairs tied in h never count as inversions of g
    order = np.lexsort((g, h))
    discordant = _count_inversions(g[order].tolist())
    concordant = all_pairs - tied_h - tied_g + tied_both - discordant
    return 2 * (concordant - discordant)


def pq_kernel_naive(h, g):
    """O(k^2) reference of pq_kernel_value"""
    h = np.asarray(h, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    if h.shape != g.shape:
        raise DimMismatch(f"Histogram lengths differ: {h.shape} vs {g.shape}")
    return int(np.sum(np.sign(h[:, None] - h[None, :]) * np.sign(g[:, None] - g[None, :])))


def _pq_sparse(h, support_h, g, support_g, k):
    """pq_kernel_value for non-negative histograms, restricted to the union of supports

    Outside the union both histograms are 0. A pair (i inside, j outside)
    contributes sign(h_i) sign(g_i), twice over the ordered pairs; pairs with
    both ends outside contribute nothing.
    """
    union = np.union1d(support_h, support_g)
    shared = len(np.intersect1d(support_h, support_g, assume_unique=True))
    return 2 * (k - len(union)) * shared + pq_kernel_value(h[union], g[union])


def _pq_rows(hists, supports, rows, cols, k, lower):
    block = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for a, i in enumerate(rows):
        for b, j in enumerate(cols):
            if lower and j > i:
                break
            block[a, b] = _pq_sparse(hists[i], supports[i], hists[j], supports[j], k)
    return block


def _stack(histograms):
    hists = [np.asarray(hist.h, dtype=np.int64) for hist in histograms]
    lengths = {len(h) for h in hists}
    if len(lengths) > 1:
        raise DimMismatch(f"Histograms have different lengths: {sorted(lengths)}")
    if any(np.any(h < 0) for h in hists):
        raise FormatError("Histogram counts must be non-negative")
    k = lengths.pop() if lengths else 0
    matrix = np.vstack(hists) if hists else np.zeros((0, k), dtype=np.int64)
    supports = [np.flatnonzero(h) for h in matrix]
    return matrix, supports, k


def pq_kernel_matrix(histograms, normalize=True, jobs=1, block_size=ROW_BLOCK_SIZE):
    """Square PQ matrix; constant histograms get unit self-similarity when normalized"""
    histograms = list(histograms)
    hists, supports, k = _stack(histograms)
    n = len(hists)
    blocks = [list(range(start, min(start + block_size, n))) for start in range(0, n, block_size)]
    results = Parallel(n_jobs=jobs)(
        delayed(_pq_rows)(hists, supports, rows, list(range(rows[-1] + 1)), k, True)
        for rows in tqdm(blocks, desc='pq rows', disable=None))
    values = np.zeros((n, n), dtype=np.int64)
    for rows, block in zip(blocks, results):
        values[rows[0]:rows[-1] + 1, :rows[-1] + 1] = block
    ids = [hist.doc_id for hist in histograms]
    kernel = KernelMatrix.square(ids, mirror_lower(values).astype(np.float64),
                                 {'kernel': 'pq', 'k': k, 'normalized': False})
    if normalize:
        kernel = normalize_kernel(kernel, allow_zero_diagonal=True)
    return kernel


def pq_self_similarities(histograms):
    hists, supports, k = _stack(histograms)
    return np.array([_pq_sparse(h, s, h, s, k) for h, s in zip(hists, supports)], dtype=np.float64)


def pq_kernel_cross(row_histograms, col_histograms, normalize=True, jobs=1,
                    block_size=ROW_BLOCK_SIZE):
    """PQ block between two histogram sets, e.g. test rows against training columns"""
    row_histograms = list(row_histograms)
    col_histograms = list(col_histograms)
    hists, supports, k = _stack(row_histograms + col_histograms)
    n_rows = len(row_histograms)
    cols = list(range(n_rows, len(hists)))
    blocks = [list(range(start, min(start + block_size, n_rows)))
              for start in range(0, n_rows, block_size)]
    results = Parallel(n_jobs=jobs)(
        delayed(_pq_rows)(hists, supports, rows, cols, k, False)
        for rows in tqdm(blocks, desc='pq cross rows', disable=None))
    values = np.zeros((n_rows, len(cols)), dtype=np.float64)
    for rows, block in zip(blocks, results):
        values[rows[0]:rows[-1] + 1] = block
    kernel = KernelMatrix(tuple(h.doc_id for h in row_histograms),
                          tuple(h.doc_id for h in col_histograms), values,
                          {'kernel': 'pq', 'k': k, 'normalized': False})
    if normalize:
        kernel = normalize_cross(kernel, pq_self_similarities(row_histograms),
                                 pq_self_similarities(col_histograms), allow_zero_diagonal=True)
    return kernel


def save_histograms(histograms, path):
    """JSONL, one {doc_id, h} per line"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for hist in histograms:
            f.write(json.dumps(hist.to_dict(), ensure_ascii=False) + '\n')


def load_histograms(path):
    histograms = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                histograms.append(BoweHistogram(str(record['doc_id']),
                                                np.asarray(record['h'], dtype=np.int32)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise FormatError(f"{path}:{line_number}: expected {{doc_id, h}}") from e
    return histograms
