"""Word vectors per token: static tables in word2vec text format and contextual dumps"""

import json
import logging
import os
from dataclasses import dataclass
from typing import List

import numpy as np

from sentikernels.core.errors import DuplicateToken, FormatError, MissingDocument

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    """Static token -> m-dimensional vector map"""
    vocab: List[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocab):
            raise FormatError(
                f"{len(self.vocab)} tokens but vectors of shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise FormatError("Embedding table contains NaN or Inf components")
        self.index = {}
        for i, token in enumerate(self.vocab):
            if token in self.index:
                raise DuplicateToken(f"Token {token!r} appears more than once")
            self.index[token] = i

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.index

    def vector(self, token):
        return self.vectors[self.index[token]]


@dataclass
class DocTokenVectors:
    """Ordered token vectors of one document"""
    doc_id: str
    vectors: np.ndarray
    oov_skipped: int = 0

    def __len__(self):
        return self.vectors.shape[0]


def load_embeddings(path):
    """Read word2vec text format: a 'vocab_size dim' header, then 'token v1 .. v_dim' rows"""
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: header must be 'vocab_size dim'")
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError as e:
            raise FormatError(f"{path}: non-integer header {header}") from e
        vocab = []
        vectors = np.empty((vocab_size, dim), dtype=np.float64)
        seen = set()
        for line_number, line in enumerate(f, start=2):
            parts = line.rstrip('\n').split(' ')
            if not line.strip():
                continue
            if len(vocab) == vocab_size:
                raise FormatError(f"{path}: more rows than the declared {vocab_size}")
            token, values = parts[0], [p for p in parts[1:] if p]
            if len(values) != dim:
                raise FormatError(
                    f"{path}:{line_number}: {len(values)} values for dimension {dim}")
            if token in seen:
                raise DuplicateToken(f"{path}:{line_number}: duplicate token {token!r}")
            seen.add(token)
            try:
                vectors[len(vocab)] = [float(v) for v in values]
            except ValueError as e:
                raise FormatError(f"{path}:{line_number}: non-numeric component") from e
            vocab.append(token)
    if len(vocab) != vocab_size:
        raise FormatError(f"{path}: header declares {vocab_size} rows, found {len(vocab)}")
    return EmbeddingTable(vocab, vectors)


def save_embeddings(table, path):
    """Write word2vec text format with 17 significant digits"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{len(table)} {table.dim}\n")
        for token, vector in zip(table.vocab, table.vectors):
            f.write(token + ' ' + ' '.join(format(float(v), '.17g') for v in vector) + '\n')


def load_contextual_dump(path):
    """Read a JSONL dump of per-token vectors: {doc_id, vectors: [[...], ...]} per line"""
    docs = []
    dim = None
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                doc_id = str(record['doc_id'])
                rows = record['vectors']
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FormatError(f"{path}:{line_number}: expected {{doc_id, vectors}}") from e
            vectors = np.asarray(rows, dtype=np.float64)
            if vectors.size == 0:
                vectors = np.zeros((0, dim or 0), dtype=np.float64)
            elif vectors.ndim != 2:
                raise FormatError(f"{path}:{line_number}: ragged token vectors")
            elif dim is None:
                dim = vectors.shape[1]
            elif vectors.shape[1] != dim:
                raise FormatError(
                    f"{path}:{line_number}: dimension {vectors.shape[1]}, expected {dim}")
            if not np.all(np.isfinite(vectors)):
                raise FormatError(f"{path}:{line_number}: NaN or Inf component")
            docs.append(DocTokenVectors(doc_id, vectors))
    # documents read before the first non-empty one carry a zero-width placeholder
    if dim is not None:
        for doc in docs:
            if len(doc) == 0:
                doc.vectors = np.zeros((0, dim), dtype=np.float64)
    logger.debug("Loaded contextual vectors for %d documents from %s", len(docs), path)
    return docs


def join_contextual(dump, doc_ids):
    """Order dump entries by corpus ids; every id must be present"""
    by_id = {doc.doc_id: doc for doc in dump}
    ordered = []
    for doc_id in doc_ids:
        if doc_id not in by_id:
            raise MissingDocument(f"Document {doc_id!r} has no contextual vectors")
        ordered.append(by_id[doc_id])
    return ordered


def doc_vectors(tokens, table, doc_id=''):
    """Look up each token; out-of-vocabulary tokens are skipped and counted"""
    rows = [table.index[token] for token in tokens if token in table.index]
    skipped = len(tokens) - len(rows)
    vectors = table.vectors[rows] if rows else np.zeros((0, table.dim), dtype=np.float64)
    return DocTokenVectors(doc_id, vectors, skipped)


def corpus_vectors(corpus, table):
    """doc_vectors for every review of a corpus, logging the OOV total"""
    docs = [doc_vectors(tokens, table, review.id)
            for review, tokens in zip(corpus.reviews, corpus.tokens())]
    skipped = sum(doc.oov_skipped for doc in docs)
    if skipped:
        logger.info("Skipped %d out-of-vocabulary token occurrences", skipped)
    return docs


def table_summary(table):
    """Statistics printed by `embed check`"""
    norms = np.linalg.norm(table.vectors, axis=1)
    return {
        'vocab_size': len(table),
        'dim': table.dim,
        'min_norm': float(norms.min()) if len(norms) else 0.0,
        'max_norm': float(norms.max()) if len(norms) else 0.0,
        'mean_norm': float(norms.mean()) if len(norms) else 0.0,
        'zero_vectors': int(np.sum(norms == 0)),
    }
