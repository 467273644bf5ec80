"""Review corpora: loading, polarity labels, preprocessing, splits and statistics"""

import json
import logging
import math
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from sentikernels.core.errors import (
    FormatError,
    InvalidStars,
    NeutralExcluded,
    StratificationImpossible,
)

logger = logging.getLogger(__name__)

POSITIVE = 'positive'
NEGATIVE = 'negative'

Label = Union[str, int]


def label_from_stars(stars):
    """Map a 1-5 star rating to a polarity label"""
    if isinstance(stars, bool) or not isinstance(stars, (int, np.integer)):
        raise InvalidStars(f"Star rating must be an integer, got {stars!r}")
    if stars < 1 or stars > 5:
        raise InvalidStars(f"Star rating {stars} outside 1..5")
    if stars == 3:
        raise NeutralExcluded("3-star reviews are neutral and have no polarity")
    return POSITIVE if stars >= 4 else NEGATIVE


def _is_separator(ch):
    """Whitespace, punctuation (P*) and symbols (S*) split tokens"""
    return ch.isspace() or unicodedata.category(ch)[0] in ('P', 'S')


def preprocess(text):
    """Lowercase text and split it into tokens, dropping punctuation"""
    tokens = []
    current = []
    for ch in text.lower():
        if _is_separator(ch):
            if current:
                tokens.append(''.join(current))
                current = []
        else:
            current.append(ch)
    if current:
        tokens.append(''.join(current))
    return tokens


def document_string(tokens):
    """The string kernels see tokens joined by single spaces"""
    return ' '.join(tokens)


@dataclass(frozen=True)
class Review:
    """One labeled text sample; `stars` is None for generic corpora"""
    id: str
    text: str
    label: Label
    stars: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise FormatError(f"Review {self.id!r} has empty text")
        if self.stars is not None and label_from_stars(self.stars) != self.label:
            raise FormatError(
                f"Review {self.id!r}: label {self.label!r} contradicts {self.stars} stars")

    def to_dict(self):
        """JSONL record"""
        record = {'id': self.id, 'text': self.text}
        if self.stars is not None:
            record['stars'] = self.stars
        record['label'] = self.label
        return record


def _sorted_labels(labels):
    kinds = {type(label) for label in labels}
    if len(kinds) > 1:
        raise FormatError("Corpus mixes string and integer labels")
    return tuple(sorted(labels))


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of reviews with unique ids"""
    reviews: Tuple[Review, ...]
    label_set: Tuple[Label, ...]
    rejected_neutral: int = field(default=0, compare=False)

    def __post_init__(self):
        seen = set()
        for review in self.reviews:
            if review.id in seen:
                raise FormatError(f"Duplicate review id {review.id!r}")
            seen.add(review.id)
            if review.label not in self.label_set:
                raise FormatError(f"Label {review.label!r} of review {review.id!r} not in label set")

    @classmethod
    def from_reviews(cls, reviews, label_set=None, rejected_neutral=0):
        """Build a corpus, deriving the label set from the reviews when not given"""
        reviews = tuple(reviews)
        if label_set is None:
            label_set = _sorted_labels({review.label for review in reviews})
        return cls(reviews, tuple(label_set), rejected_neutral)

    def __len__(self):
        return len(self.reviews)

    @property
    def ids(self):
        return [review.id for review in self.reviews]

    def tokens(self):
        """Preprocessed token sequence per review, in corpus order"""
        return [preprocess(review.text) for review in self.reviews]

    def documents(self):
        """Space-joined preprocessed text per review"""
        return [document_string(tokens) for tokens in self.tokens()]

    def label_indices(self):
        """Index of each review's label within label_set"""
        index = {label: i for i, label in enumerate(self.label_set)}
        return np.array([index[review.label] for review in self.reviews], dtype=np.int64)

    def subset(self, positions):
        """Corpus restricted to the given positions, keeping the label set

        Rejected neutral reviews belong to no subset, so `rejected_neutral` is 0
        here; the count stays on the loaded corpus.
        """
        return Corpus(tuple(self.reviews[i] for i in positions), self.label_set)

    def concat(self, other):
        """Reviews of self followed by reviews of other"""
        labels = _sorted_labels(set(self.label_set) | set(other.label_set))
        return Corpus(self.reviews + other.reviews, labels,
                      self.rejected_neutral + other.rejected_neutral)


def _review_from_record(record, line_number):
    if not isinstance(record, dict) or 'text' not in record:
        raise FormatError(f"Line {line_number}: expected an object with a 'text' field")
    review_id = str(record.get('id', line_number))
    stars = record.get('stars')
    label = record.get('label')
    if label is None:
        if stars is None:
            raise FormatError(f"Line {line_number}: review has neither label nor stars")
        label = label_from_stars(stars)
    return Review(id=review_id, text=record['text'], label=label, stars=stars)


def load_corpus(path):
    """Load a JSONL corpus, rejecting neutral reviews with a counted warning"""
    reviews = []
    neutral = 0
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{line_number}: invalid JSON ({e.msg})") from e
            try:
                reviews.append(_review_from_record(record, line_number))
            except NeutralExcluded:
                neutral += 1
    if neutral:
        logger.warning("Rejected %d neutral (3-star) reviews from %s", neutral, path)
    logger.debug("Loaded %d reviews from %s", len(reviews), path)
    return Corpus.from_reviews(reviews, rejected_neutral=neutral)


def save_corpus(corpus, path):
    """Write a corpus as JSONL, one review per line"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for review in corpus.reviews:
            f.write(json.dumps(review.to_dict(), ensure_ascii=False) + '\n')


def split_train_test(corpus, train_fraction, seed):
    """Stratified, seeded train/test split; test sizes round down per label"""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = [review.label for review in corpus.reviews]
    train_positions = []
    test_positions = []
    for label in corpus.label_set:
        positions = [i for i, value in enumerate(labels) if value == label]
        if len(positions) < 2:
            raise StratificationImpossible(
                f"Label {label!r} has {len(positions)} sample(s); at least 2 are needed to split")
        # the epsilon absorbs float error in (1 - fraction), e.g. 10 * 0.19999999999999996
        n_test = math.floor(len(positions) * (1 - train_fraction) + 1e-9)
        shuffled = [positions[i] for i in rng.permutation(len(positions))]
        test_positions.extend(shuffled[:n_test])
        train_positions.extend(shuffled[n_test:])
    return corpus.subset(sorted(train_positions)), corpus.subset(sorted(test_positions))


@dataclass
class StatsReport:
    """Sample and word counts of a corpus"""
    samples_per_label: Dict[str, int]
    words_per_label: Dict[str, int]
    word_share_per_label: Dict[str, float]
    total_samples: int
    total_words: int
    mean_words: float
    star_distribution: Dict[str, int] = field(default_factory=dict)
    rejected_neutral: int = 0

    def to_dict(self):
        return {
            'samples_per_label': self.samples_per_label,
            'words_per_label': self.words_per_label,
            'word_share_per_label': self.word_share_per_label,
            'total_samples': self.total_samples,
            'total_words': self.total_words,
            'mean_words': self.mean_words,
            'star_distribution': self.star_distribution,
            'rejected_neutral': self.rejected_neutral,
        }


def corpus_stats(corpus):
    """Per-label sample/word counts, word shares and the star distribution"""
    samples = Counter()
    words = Counter()
    stars = Counter()
    for review in corpus.reviews:
        key = str(review.label)
        samples[key] += 1
        words[key] += len(preprocess(review.text))
        if review.stars is not None:
            stars[str(review.stars)] += 1
    total_words = sum(words.values())
    total_samples = len(corpus)
    ordered = [str(label) for label in corpus.label_set]
    return StatsReport(
        samples_per_label={key: samples[key] for key in ordered},
        words_per_label={key: words[key] for key in ordered},
        word_share_per_label={
            key: (100.0 * words[key] / total_words if total_words else 0.0) for key in ordered
        },
        total_samples=total_samples,
        total_words=total_words,
        mean_words=total_words / total_samples if total_samples else 0.0,
        star_distribution={key: stars[key] for key in sorted(stars)},
        rejected_neutral=corpus.rejected_neutral,
    )


def token_counts(token_lists: List[List[str]]):
    """Token frequencies over a list of token sequences"""
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    return counts
