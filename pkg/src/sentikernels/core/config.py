"""Run configuration: TOML file merged over defaults, overridden by CLI flags"""

import hashlib
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import psutil

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from sentikernels.core.cbow import CbowConfig
from sentikernels.core.cluster import DEFAULT_K, KMEANS, POOL_CAP, SOM, SomConfig
from sentikernels.core.errors import ConfigError
from sentikernels.core.evaluate import KFOLD_CV, TRAIN_TEST
from sentikernels.core.hisk import DEFAULT_NGRAMS
from sentikernels.core.svm import DEFAULT_C

logger = logging.getLogger(__name__)

HISK = 'hisk'
BOWE = 'bowe'
HISK_BOWE = 'hisk+bowe'
METHODS = (HISK, BOWE, HISK_BOWE)

CBOW = 'cbow'
STATIC = 'static'
CONTEXTUAL = 'contextual'
EMBEDDINGS = (CBOW, STATIC, CONTEXTUAL)

KFOLD = 'kfold'
PROTOCOLS = {TRAIN_TEST: TRAIN_TEST, KFOLD: KFOLD_CV, KFOLD_CV: KFOLD_CV}

DEFAULTS = {
    'train': None,
    'test': None,
    'corpus': None,
    'train_fraction': 0.8,
    'method': HISK,
    'ngrams': list(DEFAULT_NGRAMS),
    'normalize': True,
    'embedding': CBOW,
    'embedding_path': None,
    'cbow': {},
    'clusterer': KMEANS,
    'k': DEFAULT_K,
    'som': {},
    'pool_cap': POOL_CAP,
    'C': DEFAULT_C,
    'protocol': TRAIN_TEST,
    'folds': 10,
    'seed': 0,
    'cache_dir': '.sentikernels-cache',
    'out_dir': 'sentikernels-out',
    'jobs': None,
}


def default_jobs():
    """Physical core count, falling back to 1"""
    return psutil.cpu_count(logical=False) or 1


def derive_seed(seed, stage):
    """Stable 32-bit sub-seed for a named stage"""
    digest = hashlib.sha256(f"{seed}:{stage}".encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable description of one pipeline run"""
    method: str
    protocol: str
    train: Optional[str] = None
    test: Optional[str] = None
    corpus: Optional[str] = None
    train_fraction: float = 0.8
    ngrams: Tuple[int, ...] = DEFAULT_NGRAMS
    normalize: bool = True
    embedding: str = CBOW
    embedding_path: Optional[str] = None
    cbow: CbowConfig = field(default_factory=CbowConfig)
    clusterer: str = KMEANS
    k: int = DEFAULT_K
    som: Optional[SomConfig] = None
    pool_cap: int = POOL_CAP
    C: float = DEFAULT_C
    folds: int = 10
    seed: int = 0
    cache_dir: str = '.sentikernels-cache'
    out_dir: str = 'sentikernels-out'
    jobs: int = 1

    @property
    def uses_hisk(self):
        return self.method in (HISK, HISK_BOWE)

    @property
    def uses_bowe(self):
        return self.method in (BOWE, HISK_BOWE)

    def to_dict(self):
        data = asdict(self)
        data['ngrams'] = list(self.ngrams)
        return data


class Config:
    """Configuration values from an optional TOML file, missing keys filled from DEFAULTS"""

    def __init__(self, path=None):
        self._path = path
        self._load_config()

    def _load_config(self):
        self._config = {key: (value.copy() if isinstance(value, (dict, list)) else value)
                        for key, value in DEFAULTS.items()}
        if self._path is None:
            return
        try:
            with open(self._path, 'rb') as f:
                loaded = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file {self._path} not found") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{self._path}: {e}") from e
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"{self._path}: unknown settings {unknown}")
        self._config.update(loaded)
        # relative corpus and embedding paths resolve against the config file
        base = os.path.dirname(os.path.abspath(self._path))
        for key in ('train', 'test', 'corpus', 'embedding_path'):
            value = self._config.get(key)
            if value and key in loaded and not os.path.isabs(value):
                self._config[key] = os.path.join(base, value)

    def get(self, key, default=None):
        """Get configuration value"""
        return self._config.get(key, default)

    def get_all(self):
        """Get full configuration dictionary"""
        return self._config.copy()

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"Unknown setting {key!r}")
        self._config[key] = value

    def update(self, updates):
        """Override values; None entries (flags not given) are ignored"""
        for key, value in updates.items():
            if value is not None:
                self.set(key, value)

    def to_run_config(self):
        """Validate the merged values and freeze them into a RunConfig"""
        c = self._config
        method = str(c['method']).lower()
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {c['method']!r}")
        protocol = PROTOCOLS.get(str(c['protocol']).lower())
        if protocol is None:
            raise ConfigError(f"protocol must be train_test or kfold, got {c['protocol']!r}")

        if c['train'] and c['corpus']:
            raise ConfigError("Give either train/test corpora or a single corpus, not both")
        if c['corpus'] is None and c['train'] is None:
            raise ConfigError("A train corpus or a single corpus is required")
        if protocol == TRAIN_TEST and c['train'] and not c['test']:
            raise ConfigError("The train_test protocol needs a test corpus next to train")
        for key in ('train', 'test', 'corpus'):
            if c[key] and not os.path.exists(c[key]):
                raise ConfigError(f"{key} corpus {c[key]} does not exist")
        if not 0 < float(c['train_fraction']) < 1:
            raise ConfigError(f"train_fraction must be in (0, 1), got {c['train_fraction']}")

        ngrams = tuple(sorted({int(n) for n in c['ngrams']}))
        if not ngrams or ngrams[0] < 1:
            raise ConfigError(f"ngrams must be positive integers, got {c['ngrams']}")
        if int(c['folds']) < 2:
            raise ConfigError(f"folds must be >= 2, got {c['folds']}")
        if float(c['C']) <= 0:
            raise ConfigError(f"C must be > 0, got {c['C']}")

        embedding = str(c['embedding']).lower()
        clusterer = str(c['clusterer']).lower()
        som = None
        cbow = CbowConfig()
        seed = int(c['seed'])
        if method in (BOWE, HISK_BOWE):
            if embedding not in EMBEDDINGS:
                raise ConfigError(f"embedding must be one of {EMBEDDINGS}, got {c['embedding']!r}")
            if embedding in (STATIC, CONTEXTUAL):
                path = c['embedding_path']
                if not path or not os.path.exists(path):
                    raise ConfigError(f"{embedding} embeddings need an existing embedding_path")
            if clusterer not in (KMEANS, SOM):
                raise ConfigError(f"clusterer must be kmeans or som, got {c['clusterer']!r}")
            if int(c['k']) < 1:
                raise ConfigError(f"k must be >= 1, got {c['k']}")
            try:
                cbow = CbowConfig(**dict(c['cbow'], seed=derive_seed(seed, 'cbow')))
            except TypeError as e:
                raise ConfigError(f"Invalid cbow settings: {e}") from e
            if clusterer == SOM:
                try:
                    som_settings = dict(c['som'], seed=derive_seed(seed, 'som'))
                    if 'grid_rows' in som_settings or 'grid_cols' in som_settings:
                        som = SomConfig(k=int(c['k']), **som_settings)
                    else:
                        som = SomConfig.for_k(int(c['k']), **som_settings)
                except TypeError as e:
                    raise ConfigError(f"Invalid som settings: {e}") from e

        jobs = c['jobs']
        return RunConfig(
            method=method,
            protocol=protocol,
            train=c['train'],
            test=c['test'],
            corpus=c['corpus'],
            train_fraction=float(c['train_fraction']),
            ngrams=ngrams,
            normalize=bool(c['normalize']),
            embedding=embedding,
            embedding_path=c['embedding_path'],
            cbow=cbow,
            clusterer=clusterer,
            k=int(c['k']),
            som=som,
            pool_cap=int(c['pool_cap']),
            C=float(c['C']),
            folds=int(c['folds']),
            seed=seed,
            cache_dir=c['cache_dir'],
            out_dir=c['out_dir'],
            jobs=int(jobs) if jobs else default_jobs(),
        )
