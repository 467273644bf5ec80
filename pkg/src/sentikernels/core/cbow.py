"""Continuous bag-of-words word2vec with negative sampling"""

import logging
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from tqdm import tqdm

from sentikernels.core.embed import EmbeddingTable
from sentikernels.core.errors import ConfigError, EmptyVocabulary

logger = logging.getLogger(__name__)

# Tunable Parameters
# -----------------
# Exponent applied to unigram counts for the negative-sampling distribution
NEGATIVE_POWER = 0.75
# Final learning rate as a fraction of the initial one
MIN_LR_FRACTION = 0.01


@dataclass(frozen=True)
class CbowConfig:
    """Hyperparameters of CBOW training (word2vec defaults except dim)"""
    dim: int = 300
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_count: int = 5
    subsample_threshold: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ('dim', 'window', 'negatives', 'epochs'):
            if getattr(self, name) < 1:
                raise ConfigError(f"CbowConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.initial_lr <= 0:
            raise ConfigError(f"CbowConfig.initial_lr must be > 0, got {self.initial_lr}")
        if self.min_count < 1:
            raise ConfigError(f"CbowConfig.min_count must be >= 1, got {self.min_count}")

    def to_dict(self):
        return asdict(self)


def negative_sampling_loss(context_vectors, target_vectors):
    """Loss and gradients of one CBOW update

    Args:
        context_vectors: input rows of the context words, shape (c, m)
        target_vectors: output rows, the center word first and negatives after, shape (t, m)

    Returns (loss, grad_context, grad_targets) with the gradients shaped like the inputs.
    """
    h = context_vectors.mean(axis=0)
    scores = target_vectors @ h
    labels = np.zeros(len(scores))
    labels[0] = 1.0
    # -log sigmoid(s) for the positive, -log sigmoid(-s) for the negatives
    loss = float(np.logaddexp(0.0, -scores[0]) + np.sum(np.logaddexp(0.0, scores[1:])))
    g = expit(scores) - labels
    grad_targets = np.outer(g, h)
    grad_h = g @ target_vectors
    grad_context = np.tile(grad_h / len(context_vectors), (len(context_vectors), 1))
    return loss, grad_context, grad_targets


class CbowTrainer:
    """Trains input/output embedding matrices

    After `train`, `epoch_losses` holds the mean loss per epoch and `final_lr`
    the learning rate of the last update.
    """

    def __init__(self, config):
        self.config = config
        self.vocab = []
        self.counts = None
        self.w_in = None
        self.w_out = None
        self.epoch_losses = []
        self.final_lr = None
        self._keep_prob = None
        self._negative_cdf = None

    def build_vocab(self, token_lists):
        """Keep tokens seen at least min_count times, most frequent first"""
        counts = Counter()
        for tokens in token_lists:
            counts.update(tokens)
        kept = [(token, count) for token, count in counts.items() if count >= self.config.min_count]
        if not kept:
            raise EmptyVocabulary(
                f"No token occurs at least min_count={self.config.min_count} times")
        kept.sort(key=lambda item: (-item[1], item[0]))
        self.vocab = [token for token, _ in kept]
        self.counts = np.array([count for _, count in kept], dtype=np.float64)
        total = self.counts.sum()

        threshold = self.config.subsample_threshold
        if threshold > 0:
            freq = self.counts / total
            self._keep_prob = np.minimum(1.0, (np.sqrt(freq / threshold) + 1) * threshold / freq)
        else:
            self._keep_prob = np.ones(len(self.vocab))

        weights = self.counts ** NEGATIVE_POWER
        self._negative_cdf = np.cumsum(weights / weights.sum())
        self._negative_cdf[-1] = 1.0
        logger.info("CBOW vocabulary: %d tokens (%d occurrences)", len(self.vocab), int(total))

    def _encode(self, token_lists):
        index = {token: i for i, token in enumerate(self.vocab)}
        return [np.array([index[t] for t in tokens if t in index], dtype=np.int64)
                for tokens in token_lists]

    def _learning_rate(self, progress):
        lr0 = self.config.initial_lr
        return max(lr0 * MIN_LR_FRACTION, lr0 - (lr0 - lr0 * MIN_LR_FRACTION) * progress)

    def _train_sentences(self, sentences, rng, start, total_words, scale=1.0):
        """One pass over sentences; returns (loss sum, update count, words read, last rate)

        `scale` converts words read here into corpus words, so a shard holding
        1/w of the corpus moves the schedule as fast as a single worker would.
        """
        config = self.config
        loss_sum = 0.0
        updates = 0
        words = 0
        lr = self._learning_rate(start / total_words)
        for sentence in sentences:
            words += len(sentence)
            lr = self._learning_rate((start + words * scale) / total_words)
            if len(sentence) < 2:
                continue
            kept = sentence[rng.random(len(sentence)) < self._keep_prob[sentence]]
            for pos, center in enumerate(kept):
                reduced = config.window - int(rng.integers(0, config.window))
                lo, hi = max(0, pos - reduced), min(len(kept), pos + reduced + 1)
                context = np.concatenate((kept[lo:pos], kept[pos + 1:hi]))
                if len(context) == 0:
                    continue
                negatives = np.searchsorted(self._negative_cdf, rng.random(config.negatives),
                                            side='right')
                negatives = negatives[negatives != center]
                targets = np.concatenate(([center], negatives))
                loss, grad_context, grad_targets = negative_sampling_loss(
                    self.w_in[context], self.w_out[targets])
                np.add.at(self.w_out, targets, -lr * grad_targets)
                np.add.at(self.w_in, context, -lr * grad_context)
                loss_sum += loss
                updates += 1
        return loss_sum, updates, words, lr

    def train(self, token_lists, workers=1):
        """Fit embeddings; workers > 1 runs unsynchronized shared-memory workers"""
        token_lists = list(token_lists)
        if self.counts is None:
            self.build_vocab(token_lists)
        config = self.config
        rng = np.random.default_rng(config.seed)
        self.w_in = (rng.random((len(self.vocab), config.dim)) - 0.5) / config.dim
        self.w_out = np.zeros((len(self.vocab), config.dim))
        sentences = self._encode(token_lists)
        words_per_epoch = sum(len(s) for s in sentences)
        total_words = max(1, words_per_epoch * config.epochs)
        self.epoch_losses = []
        self.final_lr = config.initial_lr
        shards = [sentences[w::workers] for w in range(workers)] if workers > 1 else []
        shard_scales = [words_per_epoch / max(1, sum(len(s) for s in shard)) for shard in shards]

        for epoch in tqdm(range(config.epochs), desc='cbow epochs', disable=None):
            start = epoch * words_per_epoch
            if workers <= 1:
                loss_sum, updates, _, self.final_lr = self._train_sentences(
                    sentences, rng, start, total_words)
            else:
                results = Parallel(n_jobs=workers, require='sharedmem')(
                    delayed(self._train_sentences)(
                        shard, np.random.default_rng([config.seed, epoch, w]), start, total_words,
                        shard_scales[w])
                    for w, shard in enumerate(shards))
                loss_sum = sum(r[0] for r in results)
                updates = sum(r[1] for r in results)
                self.final_lr = min(r[3] for r in results)
            mean_loss = loss_sum / max(1, updates)
            self.epoch_losses.append(mean_loss)
            logger.info("CBOW epoch %d/%d: mean loss %.4f over %d updates",
                        epoch + 1, config.epochs, mean_loss, updates)
        return EmbeddingTable(list(self.vocab), self.w_in.copy())


def train_cbow(corpus, config, workers=1):
    """Train CBOW on the preprocessed tokens of a corpus"""
    trainer = CbowTrainer(config)
    return trainer.train(corpus.tokens(), workers=workers)
