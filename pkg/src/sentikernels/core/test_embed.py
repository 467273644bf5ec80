"""Unit tests for embedding tables and contextual vector dumps"""

import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from sentikernels.core.corpus import NEGATIVE, POSITIVE, Corpus, Review
from sentikernels.core.embed import (
    EmbeddingTable,
    corpus_vectors,
    doc_vectors,
    join_contextual,
    load_contextual_dump,
    load_embeddings,
    save_embeddings,
    table_summary,
)
from sentikernels.core.errors import DuplicateToken, FormatError, MissingDocument


class TestEmbeddingFiles(unittest.TestCase):
    """word2vec text format"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, 'vectors.txt')

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _write(self, text):
        with open(self.path, 'w', encoding='utf-8') as f:
            f.write(text)

    def test_load(self):
        """Test loading a word2vec text table"""
        self._write("2 3\nbun 0.1 0.2 0.3\nrău -1 0 1.5\n")
        table = load_embeddings(self.path)
        self.assertEqual(table.vocab, ['bun', 'rău'])
        self.assertEqual(table.dim, 3)
        np.testing.assert_array_equal(table.vector('rău'), [-1.0, 0.0, 1.5])

    def test_save_preserves_values(self):
        """Test save preserves values"""
        rng = np.random.default_rng(0)
        table = EmbeddingTable(['a', 'b', 'c'], rng.normal(size=(3, 4)))
        save_embeddings(table, self.path)
        loaded = load_embeddings(self.path)
        self.assertEqual(loaded.vocab, table.vocab)
        np.testing.assert_array_equal(loaded.vectors, table.vectors)

    def test_wrong_width(self):
        """Test wrong width"""
        self._write("1 3\nbun 0.1 0.2\n")
        with self.assertRaises(FormatError):
            load_embeddings(self.path)

    def test_row_count_mismatch(self):
        """Test row count mismatch"""
        self._write("3 2\nbun 0.1 0.2\n")
        with self.assertRaises(FormatError):
            load_embeddings(self.path)

    def test_duplicate_token(self):
        """Test duplicate token"""
        self._write("2 2\nbun 0.1 0.2\nbun 0.3 0.4\n")
        with self.assertRaises(DuplicateToken):
            load_embeddings(self.path)

    def test_non_finite(self):
        """Test NaN and Inf components are rejected"""
        self._write("1 2\nbun nan 0.2\n")
        with self.assertRaises(FormatError):
            load_embeddings(self.path)


class TestLookup(unittest.TestCase):
    """Per-document token vectors"""

    def setUp(self):
        self.table = EmbeddingTable(['a', 'b'], [[1.0, 0.0], [0.0, 1.0]])

    def test_oov_skipped(self):
        """Test out-of-vocabulary tokens are skipped and counted"""
        vectors = doc_vectors(['a', 'zzz', 'b', 'a'], self.table, 'd1')
        self.assertEqual(len(vectors), 3)
        self.assertEqual(vectors.oov_skipped, 1)
        np.testing.assert_array_equal(vectors.vectors[2], [1.0, 0.0])

    def test_all_oov(self):
        """Test a document with only unknown tokens has no vectors"""
        vectors = doc_vectors(['x', 'y'], self.table)
        self.assertEqual(vectors.vectors.shape, (0, 2))

    def test_corpus_vectors_keep_ids(self):
        """Test corpus vectors keep ids"""
        corpus = Corpus.from_reviews([Review('r1', 'A b!', POSITIVE), Review('r2', 'c', NEGATIVE)])
        docs = corpus_vectors(corpus, self.table)
        self.assertEqual([d.doc_id for d in docs], ['r1', 'r2'])
        self.assertEqual([len(d) for d in docs], [2, 0])

    def test_summary(self):
        """Test embed check statistics"""
        summary = table_summary(EmbeddingTable(['a', 'z'], [[3.0, 4.0], [0.0, 0.0]]))
        self.assertEqual(summary['vocab_size'], 2)
        self.assertEqual(summary['max_norm'], 5.0)
        self.assertEqual(summary['zero_vectors'], 1)


class TestContextualDump(unittest.TestCase):
    """JSONL token-vector dumps"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, 'dump.jsonl')

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _write(self, records):
        with open(self.path, 'w', encoding='utf-8') as f:
            for record in records:
                f.write(json.dumps(record) + '\n')

    def test_load_and_join(self):
        """Test load and join"""
        self._write([
            {'doc_id': 'empty', 'vectors': []},
            {'doc_id': 'x', 'vectors': [[1, 2, 3], [4, 5, 6]]},
            {'doc_id': 'y', 'vectors': [[0, 0, 1]]},
        ])
        dump = load_contextual_dump(self.path)
        self.assertEqual(dump[0].vectors.shape, (0, 3))
        ordered = join_contextual(dump, ['y', 'x'])
        self.assertEqual([d.doc_id for d in ordered], ['y', 'x'])
        self.assertEqual(len(ordered[1]), 2)

    def test_missing_document(self):
        """Test missing document"""
        self._write([{'doc_id': 'x', 'vectors': [[1.0]]}])
        with self.assertRaises(MissingDocument):
            join_contextual(load_contextual_dump(self.path), ['x', 'y'])

    def test_inconsistent_dimension(self):
        """Test inconsistent dimension"""
        self._write([{'doc_id': 'x', 'vectors': [[1, 2]]}, {'doc_id': 'y', 'vectors': [[1, 2, 3]]}])
        with self.assertRaises(FormatError):
            load_contextual_dump(self.path)


if __name__ == '__main__':
    unittest.main()
