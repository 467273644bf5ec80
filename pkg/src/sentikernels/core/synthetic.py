"""Synthetic data: planted-polarity review corpora and Zipf-weighted Gaussian mixtures"""

import numpy as np

from sentikernels.core.corpus import NEGATIVE, POSITIVE, Corpus, Review
from sentikernels.core.embed import EmbeddingTable

POSITIVE_WORDS = ('excellent', 'wonderful', 'amazing', 'superb', 'delightful', 'perfect')
NEGATIVE_WORDS = ('terrible', 'awful', 'horrible', 'dreadful', 'broken', 'useless')
_SYLLABLES = ('ka', 'lo', 'mi', 'nu', 'pe', 'ra', 'si', 'to', 'vu', 'ze', 'bo', 'di')


def neutral_vocabulary(size, seed=0):
    """Pseudo-words of two to four syllables, none of them a polarity word"""
    rng = np.random.default_rng(seed)
    words = set()
    while len(words) < size:
        count = int(rng.integers(2, 5))
        words.add(''.join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), count)))
    return sorted(words)


def planted_polarity_corpus(n_docs=200, doc_length=24, polar_tokens=6, vocab_size=150, seed=0):
    """Two balanced classes of filler text, each document salted with its class's polarity words

    Positive reviews carry 4 or 5 stars, negative ones 1 or 2.
    """
    rng = np.random.default_rng(seed)
    filler = neutral_vocabulary(vocab_size, seed)
    reviews = []
    for i in range(n_docs):
        positive = i % 2 == 0
        polar = POSITIVE_WORDS if positive else NEGATIVE_WORDS
        tokens = [filler[j] for j in rng.integers(0, len(filler), doc_length)]
        for word in rng.choice(polar, size=polar_tokens):
            tokens.insert(int(rng.integers(0, len(tokens) + 1)), str(word))
        stars = int(rng.integers(4, 6)) if positive else int(rng.integers(1, 3))
        reviews.append(Review(id=f"doc{i:04d}", text=' '.join(tokens).capitalize() + '.',
                              label=POSITIVE if positive else NEGATIVE, stars=stars))
    return Corpus.from_reviews(reviews)


def planted_embeddings(corpus, dim=16, noise=0.1, seed=0):
    """Static table where each class's polarity words sit around its own direction"""
    rng = np.random.default_rng(seed)
    vocab = sorted({token for tokens in corpus.tokens() for token in tokens})
    directions = {POSITIVE: np.eye(dim)[0], NEGATIVE: np.eye(dim)[1]}
    vectors = np.empty((len(vocab), dim))
    for i, token in enumerate(vocab):
        if token in POSITIVE_WORDS:
            vectors[i] = directions[POSITIVE] * 3 + rng.normal(0, noise, dim)
        elif token in NEGATIVE_WORDS:
            vectors[i] = directions[NEGATIVE] * 3 + rng.normal(0, noise, dim)
        else:
            vectors[i] = rng.normal(0, 1, dim)
            vectors[i, :2] = 0.0
            vectors[i, 2] += 2.0
    return EmbeddingTable(vocab, vectors)


def zipf_mixture(components=50, dim=20, scale=1000, spread=0.5, noise=1.0, seed=0):
    """Gaussian mixture whose r-th component holds floor(scale / r) points

    Returns (points, component labels), points shuffled.
    """
    rng = np.random.default_rng(seed)
    sizes = [scale // r for r in range(1, components + 1)]
    means = rng.normal(0, spread, (components, dim)) + 0.5
    points = np.vstack([rng.normal(means[c], noise, (size, dim)) for c, size in enumerate(sizes)])
    labels = np.repeat(np.arange(components), sizes)
    order = rng.permutation(len(points))
    return points[order], labels[order]
