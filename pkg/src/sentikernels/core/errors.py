"""Error types raised by the sentikernels pipeline"""


class SentiKernelsError(Exception):
    """Base error; `stage` names the pipeline stage that failed, when known"""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def to_dict(self):
        """Error payload printed by the CLI"""
        return {
            'stage': self.stage,
            'error': type(self).__name__,
            'message': str(self),
        }


class ConfigError(SentiKernelsError, ValueError):
    """Invalid configuration value or missing required setting"""


class CacheError(SentiKernelsError):
    """Artifact cache could not be read or written"""


# Corpus
class NeutralExcluded(SentiKernelsError, ValueError):
    """A 3-star review has no polarity"""


class InvalidStars(SentiKernelsError, ValueError):
    """Star rating outside 1..5"""


class StratificationImpossible(SentiKernelsError, ValueError):
    """Too few samples to split or fold per label"""


class FormatError(SentiKernelsError, ValueError):
    """Malformed input file"""


# Kernels
class DegenerateDiagonal(SentiKernelsError, ValueError):
    """Kernel normalization needs a strictly positive diagonal"""


class ManifestMismatch(SentiKernelsError, ValueError):
    """Sample-ID manifests of two kernel blocks or a model disagree"""


class DimMismatch(SentiKernelsError, ValueError):
    """Vector or histogram lengths disagree"""


# Embeddings
class EmptyVocabulary(SentiKernelsError, ValueError):
    """No token survives the min_count filter"""


class DuplicateToken(FormatError):
    """The same token appears twice in an embedding file"""


class MissingDocument(SentiKernelsError, KeyError):
    """A corpus document has no entry in a contextual dump"""

    def __str__(self):
        # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ''


# Clustering
class TooFewVectors(SentiKernelsError, ValueError):
    """Fewer vectors than requested clusters"""


class ZeroNormVector(SentiKernelsError, ValueError):
    """Cosine similarity is undefined for a zero vector"""


# Learning
class DegenerateLabels(SentiKernelsError, ValueError):
    """A training set is missing one of the classes"""
