"""Kernel matrices in dual form: KMAT1 cache files, normalization and fusion"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from sentikernels.core.errors import (
    DegenerateDiagonal,
    FormatError,
    ManifestMismatch,
)

logger = logging.getLogger(__name__)

KMAT_MAGIC = b'KMAT1'
_HEADER = struct.Struct('<II')


@dataclass
class KernelMatrix:
    """Similarity block between row samples and column samples"""
    row_ids: Tuple[str, ...]
    col_ids: Tuple[str, ...]
    values: np.ndarray
    recipe: dict = field(default_factory=dict)

    def __post_init__(self):
        self.row_ids = tuple(str(i) for i in self.row_ids)
        self.col_ids = tuple(str(i) for i in self.col_ids)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise FormatError(
                f"Kernel values of shape {self.values.shape} do not match "
                f"{len(self.row_ids)} row ids and {len(self.col_ids)} column ids")

    @classmethod
    def square(cls, ids, values, recipe=None):
        """Kernel of a sample set with itself"""
        return cls(tuple(ids), tuple(ids), values, dict(recipe or {}))

    @property
    def is_square(self):
        return self.row_ids == self.col_ids

    @property
    def ids(self):
        if not self.is_square:
            raise ManifestMismatch("Cross kernel has distinct row and column manifests")
        return self.row_ids

    @property
    def shape(self):
        return self.values.shape

    def diagonal(self):
        return np.array(np.diag(self.values), dtype=np.float64)

    def submatrix(self, rows, cols):
        """Block indexed by row and column positions"""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return KernelMatrix(
            tuple(self.row_ids[i] for i in rows),
            tuple(self.col_ids[j] for j in cols),
            np.ascontiguousarray(self.values[np.ix_(rows, cols)]),
            dict(self.recipe),
        )


def mirror_lower(values):
    """Copy the lower triangle onto the upper one so the matrix is exactly symmetric"""
    lower = np.tril(values)
    return lower + np.tril(values, -1).T


def _inverse_sqrt(diag, allow_zero):
    if np.any(diag < 0) or (not allow_zero and np.any(diag <= 0)):
        bad = int(np.argmin(diag))
        raise DegenerateDiagonal(f"Kernel diagonal entry {bad} is {diag[bad]}; normalization needs K_ii > 0")
    inv = np.zeros_like(diag)
    positive = diag > 0
    inv[positive] = 1.0 / np.sqrt(diag[positive])
    return inv


def normalize_kernel(kernel, allow_zero_diagonal=False):
    """K'_ij = K_ij / sqrt(K_ii K_jj); zero-diagonal samples map to unit self-similarity"""
    if not kernel.is_square:
        raise ManifestMismatch("normalize_kernel needs a square kernel; use normalize_cross")
    diag = kernel.diagonal()
    inv = _inverse_sqrt(diag, allow_zero_diagonal)
    values = np.asarray(kernel.values, dtype=np.float64) * inv[:, None] * inv[None, :]
    values = mirror_lower(values)
    np.fill_diagonal(values, 1.0)
    recipe = dict(kernel.recipe, normalized=True)
    return KernelMatrix(kernel.row_ids, kernel.col_ids, values, recipe)


def normalize_cross(kernel, row_diag, col_diag, allow_zero_diagonal=False):
    """Normalize a cross block with the self-similarities of its rows and columns"""
    row_inv = _inverse_sqrt(np.asarray(row_diag, dtype=np.float64), allow_zero_diagonal)
    col_inv = _inverse_sqrt(np.asarray(col_diag, dtype=np.float64), allow_zero_diagonal)
    values = np.asarray(kernel.values, dtype=np.float64) * row_inv[:, None] * col_inv[None, :]
    recipe = dict(kernel.recipe, normalized=True)
    return KernelMatrix(kernel.row_ids, kernel.col_ids, values, recipe)


def fuse_kernels(kernels):
    """Sum kernel blocks that share row and column manifests"""
    kernels = list(kernels)
    if not kernels:
        raise ValueError("fuse_kernels needs at least one kernel")
    first = kernels[0]
    values = np.array(first.values, dtype=np.float64, copy=True)
    for other in kernels[1:]:
        if other.row_ids != first.row_ids or other.col_ids != first.col_ids:
            raise ManifestMismatch("Cannot fuse kernels with different sample manifests")
        if not other.recipe.get('normalized', True) or not first.recipe.get('normalized', True):
            logger.warning("Fusing an unnormalized kernel; the larger-scale kernel will dominate")
        values += other.values
    recipe = {
        'fused': [k.recipe for k in kernels],
        'normalized': all(k.recipe.get('normalized', True) for k in kernels),
    }
    return KernelMatrix(first.row_ids, first.col_ids, values, recipe)


def save_kernel(kernel, path):
    """Write KMAT1: magic, u32 rows, u32 cols, f64 LE row-major values, JSON trailer"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    rows, cols = kernel.shape
    trailer = json.dumps({
        'row_ids': list(kernel.row_ids),
        'col_ids': list(kernel.col_ids),
        'recipe': kernel.recipe,
    }, ensure_ascii=False, sort_keys=True).encode('utf-8')
    tmp_path = path + '.tmp'
    with open(tmp_path, 'wb') as f:
        f.write(KMAT_MAGIC)
        f.write(_HEADER.pack(rows, cols))
        f.write(np.ascontiguousarray(kernel.values, dtype='<f8').tobytes())
        f.write(trailer)
    os.replace(tmp_path, path)


def load_kernel(path, mmap=False):
    """Read a KMAT1 file; with mmap=True the values stay on disk"""
    with open(path, 'rb') as f:
        magic = f.read(len(KMAT_MAGIC))
        if magic != KMAT_MAGIC:
            raise FormatError(f"{path} is not a KMAT1 file")
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        rows, cols = _HEADER.unpack(header)
        offset = len(KMAT_MAGIC) + _HEADER.size
        f.seek(offset + rows * cols * 8)
        trailer_bytes = f.read()
    try:
        trailer = json.loads(trailer_bytes.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable manifest trailer") from e
    if mmap:
        values = np.memmap(path, dtype='<f8', mode='r', offset=offset, shape=(rows, cols))
    else:
        values = np.fromfile(path, dtype='<f8', count=rows * cols, offset=offset)
        if values.size != rows * cols:
            raise FormatError(f"{path}: expected {rows * cols} values, found {values.size}")
        values = values.reshape(rows, cols).astype(np.float64)
    return KernelMatrix(tuple(trailer['row_ids']), tuple(trailer['col_ids']), values,
                        trailer.get('recipe', {}))
