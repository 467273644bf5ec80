"""Unit tests for CBOW training with negative sampling"""

import unittest

import numpy as np

from sentikernels.core.cbow import (
    MIN_LR_FRACTION,
    CbowConfig,
    CbowTrainer,
    negative_sampling_loss,
    train_cbow,
)
from sentikernels.core.errors import ConfigError, EmptyVocabulary
from sentikernels.core.synthetic import planted_polarity_corpus


def numeric_gradient(f, array, eps=1e-6):
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        plus = f()
        array[index] = original - eps
        minus = f()
        array[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def relative_error(a, b):
    return np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(a) + np.abs(b)))


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def temperature_sentences(n=600, seed=0):
    """Sentences where hot and warm share kitchen contexts and cold only sits among winter words"""
    rng = np.random.default_rng(seed)
    kitchen = ('soup', 'tea', 'coffee', 'bath', 'oven', 'stove')
    winter = ('ice', 'snow', 'freezer', 'glacier', 'frost', 'sleet')
    sentences = []
    for i in range(n):
        if i % 3 == 2:
            words, center = winter, 'cold'
        else:
            words, center = kitchen, ('hot' if i % 3 == 0 else 'warm')
        context = [str(w) for w in rng.choice(words, size=4)]
        sentences.append(context[:2] + [center] + context[2:])
    return sentences


class TestGradients(unittest.TestCase):
    """Analytic gradients against central finite differences"""

    def test_gradient_check(self):
        """Test gradient check"""
        rng = np.random.default_rng(0)
        for _ in range(5):
            context = rng.normal(0, 0.5, (4, 8))
            targets = rng.normal(0, 0.5, (6, 8))
            _, grad_context, grad_targets = negative_sampling_loss(context, targets)

            def loss():
                return negative_sampling_loss(context, targets)[0]

            self.assertLess(relative_error(grad_context, numeric_gradient(loss, context)), 1e-4)
            self.assertLess(relative_error(grad_targets, numeric_gradient(loss, targets)), 1e-4)

    def test_zero_output_loss(self):
        """Test zero output loss"""
        loss, _, _ = negative_sampling_loss(np.ones((2, 3)), np.zeros((4, 3)))
        self.assertAlmostEqual(loss, 4 * np.log(2))


class TestTrainer(unittest.TestCase):
    """Vocabulary building and training runs"""

    def setUp(self):
        self.sentences = planted_polarity_corpus(n_docs=60, seed=1).tokens()
        self.config = CbowConfig(dim=12, window=3, negatives=4, epochs=4, min_count=2, seed=5)

    def test_vocabulary_order(self):
        """Test vocabulary order"""
        trainer = CbowTrainer(CbowConfig(min_count=2))
        trainer.build_vocab([['b', 'a', 'c'], ['a', 'b'], ['a']])
        self.assertEqual(trainer.vocab, ['a', 'b'])

    def test_empty_vocabulary(self):
        """Test empty vocabulary"""
        with self.assertRaises(EmptyVocabulary):
            CbowTrainer(CbowConfig(min_count=3)).build_vocab([['a', 'b'], ['c']])

    def test_loss_decreases(self):
        """Test loss decreases"""
        trainer = CbowTrainer(self.config)
        table = trainer.train(self.sentences)
        self.assertEqual(table.dim, 12)
        self.assertEqual(len(trainer.epoch_losses), 4)
        self.assertLess(trainer.epoch_losses[-1], trainer.epoch_losses[0])
        self.assertTrue(np.all(np.isfinite(table.vectors)))

    def test_seeded_training_is_deterministic(self):
        """Test seeded training is deterministic"""
        first = CbowTrainer(self.config).train(self.sentences)
        second = CbowTrainer(self.config).train(self.sentences)
        self.assertEqual(first.vocab, second.vocab)
        np.testing.assert_array_equal(first.vectors, second.vectors)

    def test_invalid_config(self):
        """Test invalid config"""
        with self.assertRaises(ConfigError):
            CbowConfig(window=0)
        with self.assertRaises(ConfigError):
            CbowConfig(initial_lr=0)


class TestEmbeddingQuality(unittest.TestCase):
    """Properties of the trained vectors"""

    def test_default_dimension(self):
        """Test the default configuration yields 300-component vectors"""
        corpus = planted_polarity_corpus(n_docs=20, seed=2)
        table = train_cbow(corpus, CbowConfig(epochs=1, min_count=1, seed=0))
        self.assertEqual(table.dim, 300)
        self.assertEqual(table.vectors.shape, (len(table), 300))
        self.assertTrue(np.all(np.isfinite(table.vectors)))

    def test_shared_contexts_give_similar_vectors(self):
        """Test words seen in the same contexts end up closer than words seen apart"""
        config = CbowConfig(dim=20, window=2, negatives=5, epochs=10, initial_lr=0.05,
                            min_count=1, subsample_threshold=0, seed=0)
        trainer = CbowTrainer(config)
        table = trainer.train(temperature_sentences())
        hot, warm, cold = (table.vector(w) for w in ('hot', 'warm', 'cold'))
        self.assertGreater(cosine(hot, warm), cosine(hot, cold))


class TestWorkers(unittest.TestCase):
    """Shared-memory multi-worker training"""

    def setUp(self):
        self.sentences = temperature_sentences(n=300, seed=1)
        self.config = CbowConfig(dim=10, window=2, negatives=3, epochs=3, min_count=1,
                                 subsample_threshold=0, seed=4)

    def test_learning_rate_reaches_floor(self):
        """Test every worker count decays the rate to a hundredth of the initial one"""
        for workers in (1, 2, 3):
            trainer = CbowTrainer(self.config)
            table = trainer.train(self.sentences, workers=workers)
            self.assertAlmostEqual(trainer.final_lr, self.config.initial_lr * MIN_LR_FRACTION,
                                   msg=f"workers={workers}")
            self.assertEqual(len(trainer.epoch_losses), 3)
            self.assertTrue(np.all(np.isfinite(table.vectors)))

    def test_more_workers_than_sentences(self):
        """Test idle workers leave training intact"""
        trainer = CbowTrainer(self.config)
        table = trainer.train(self.sentences[:2], workers=4)
        self.assertEqual(table.vectors.shape[1], 10)
        self.assertAlmostEqual(trainer.final_lr, self.config.initial_lr * MIN_LR_FRACTION)


if __name__ == '__main__':
    unittest.main()
