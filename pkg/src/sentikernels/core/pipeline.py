"""End-to-end runs: corpus -> kernels / embeddings -> codebook -> BOWE -> fusion -> SVM -> report"""

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from sentikernels.core import bowe, cluster, embed, hisk
from sentikernels.core.cbow import train_cbow
from sentikernels.core.config import CBOW, CONTEXTUAL, STATIC, derive_seed
from sentikernels.core.corpus import load_corpus, save_corpus, split_train_test
from sentikernels.core.errors import CacheError, SentiKernelsError
from sentikernels.core.evaluate import (
    KFOLD_CV,
    evaluate_train_test,
    kfold_cv,
    save_report,
    write_confusion_csv,
)
from sentikernels.core.kernel import (
    fuse_kernels,
    load_kernel,
    normalize_cross,
    normalize_kernel,
    save_kernel,
)
from sentikernels.core.svm import ovr_train, save_model

logger = logging.getLogger(__name__)

HASH_CHUNK = 1 << 20


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(HASH_CHUNK), b''):
            digest.update(chunk)
    return digest.hexdigest()


@contextmanager
def stage(name):
    """Tag errors raised inside a pipeline stage with its name"""
    logger.info("Stage %s: start", name)
    try:
        yield
    except SentiKernelsError as e:
        if e.stage is None:
            e.stage = name
        raise
    except (OSError, ValueError, KeyError) as e:
        raise SentiKernelsError(f"{type(e).__name__}: {e}", stage=name) from e
    logger.info("Stage %s: done", name)


class ArtifactCache:
    """Content-addressed stage outputs, each with a manifest recording its hash

    The key hashes the stage name, its parameters and the contents of its
    input files. An artifact whose bytes no longer match its manifest is
    recomputed.
    """

    def __init__(self, cache_dir):
        self.cache_dir = cache_dir
        self.hits = []
        self.misses = []
        try:
            os.makedirs(cache_dir, exist_ok=True)
        except OSError as e:
            raise CacheError(f"Cannot create cache directory {cache_dir}: {e}") from e

    def key(self, stage_name, params, inputs):
        payload = json.dumps({
            'stage': stage_name,
            'params': params,
            'inputs': [file_sha256(path) for path in inputs],
        }, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def path(self, stage_name, key, suffix):
        return os.path.join(self.cache_dir, f"{stage_name}-{key[:16]}{suffix}")

    def _manifest_path(self, path):
        return path + '.manifest.json'

    def _is_valid(self, path, key):
        manifest_path = self._manifest_path(path)
        if not (os.path.exists(path) and os.path.exists(manifest_path)):
            return False
        try:
            with open(manifest_path, 'r', encoding='utf-8') as f:
                manifest = json.load(f)
        except (OSError, json.JSONDecodeError):
            return False
        if manifest.get('key') != key or manifest.get('sha256') != file_sha256(path):
            logger.warning("Cached artifact %s does not match its manifest; recomputing", path)
            return False
        return True

    def artifact(self, stage_name, params, inputs, suffix, produce):
        """Path of the stage output, calling produce(path) on a cache miss"""
        key = self.key(stage_name, params, inputs)
        path = self.path(stage_name, key, suffix)
        if self._is_valid(path, key):
            logger.info("Cache hit: %s", os.path.basename(path))
            self.hits.append(stage_name)
            return path
        logger.info("Cache miss: %s", os.path.basename(path))
        self.misses.append(stage_name)
        produce(path)
        manifest = {'stage': stage_name, 'key': key, 'params': params, 'sha256': file_sha256(path)}
        with open(self._manifest_path(path), 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        return path


@dataclass
class PipelineResult:
    report: object
    artifacts: Dict[str, str] = field(default_factory=dict)


def _prepare_corpora(config, cache):
    """(train path, test path or None); KFOLD runs pool everything into the train side"""
    kfold = config.protocol == KFOLD_CV
    if config.corpus:
        if kfold:
            return config.corpus, None

        def produce_split(which):
            def produce(path):
                train, test = split_train_test(load_corpus(config.corpus), config.train_fraction,
                                               derive_seed(config.seed, 'split'))
                save_corpus(train if which == 'train' else test, path)
            return produce

        params = {'train_fraction': config.train_fraction, 'seed': config.seed}
        train_path = cache.artifact('split-train', params, [config.corpus], '.jsonl',
                                    produce_split('train'))
        test_path = cache.artifact('split-test', params, [config.corpus], '.jsonl',
                                   produce_split('test'))
        return train_path, test_path
    if kfold and config.test:
        def produce_pool(path):
            save_corpus(load_corpus(config.train).concat(load_corpus(config.test)), path)
        return cache.artifact('pool', {}, [config.train, config.test], '.jsonl', produce_pool), None
    return config.train, (config.test if not kfold else None)


def _hisk_kernels(config, cache, train_path, test_path, train, test):
    params = {'ngrams': list(config.ngrams)}
    train_docs = train.documents()

    def produce_square(path):
        save_kernel(hisk.compute_hisk_matrix(train_docs, config.ngrams, train.ids, config.jobs), path)

    square_path = cache.artifact('hisk', params, [train_path], '.kmat', produce_square)
    square = load_kernel(square_path)
    cross = cross_path = None
    if test is not None:
        def produce_cross(path):
            save_kernel(hisk.compute_hisk_cross(test.documents(), train_docs, config.ngrams,
                                                test.ids, train.ids, config.jobs), path)
        cross_path = cache.artifact('hisk-cross', params, [test_path, train_path], '.kmat',
                                    produce_cross)
        cross = load_kernel(cross_path)
    if config.normalize:
        train_diag = square.diagonal()
        empty = int(np.count_nonzero(train_diag == 0))
        if empty:
            logger.warning("%d training reviews are shorter than %d characters and share no "
                           "n-grams with anything", empty, min(config.ngrams))
        square = normalize_kernel(square, allow_zero_diagonal=True)
        if cross is not None:
            cross = normalize_cross(cross, hisk.self_similarities(test.documents(), config.ngrams),
                                    train_diag, allow_zero_diagonal=True)
    return square, cross, {'hisk': square_path, 'hisk_cross': cross_path}


def _token_vectors(config, cache, train_path, train, test):
    """Per-document token vectors for train and test, plus the embedding file used"""
    if config.embedding == CBOW:
        def produce(path):
            embed.save_embeddings(train_cbow(load_corpus(train_path), config.cbow), path)
        table_path = cache.artifact('cbow', config.cbow.to_dict(), [train_path], '.txt', produce)
    else:
        table_path = config.embedding_path
    if config.embedding in (CBOW, STATIC):
        table = embed.load_embeddings(table_path)
        logger.info("Embedding table: %d tokens, dim %d", len(table), table.dim)
        train_vectors = embed.corpus_vectors(train, table)
        test_vectors = embed.corpus_vectors(test, table) if test is not None else None
    elif config.embedding == CONTEXTUAL:
        dump = embed.load_contextual_dump(table_path)
        train_vectors = embed.join_contextual(dump, train.ids)
        test_vectors = embed.join_contextual(dump, test.ids) if test is not None else None
    else:
        raise ValueError(f"Unknown embedding source {config.embedding!r}")
    return table_path, train_vectors, test_vectors


def _fit_codebook(config, cache, inputs, train_vectors):
    pool_seed = derive_seed(config.seed, 'pool')
    pool, subsampled_from = cluster.pool_vectors(train_vectors, config.pool_cap, pool_seed)
    if config.clusterer == cluster.SOM:
        params = {'clusterer': cluster.SOM, 'som': config.som.to_dict(), 'pool_cap': config.pool_cap}

        def produce(path):
            cluster.save_codebook(cluster.som_fit(pool, config.som), path)
    else:
        kmeans_seed = derive_seed(config.seed, 'kmeans')
        params = {'clusterer': cluster.KMEANS, 'k': config.k, 'seed': kmeans_seed,
                  'pool_cap': config.pool_cap}

        def produce(path):
            cluster.save_codebook(cluster.kmeans_fit(pool, config.k, kmeans_seed), path)
    params['pool_seed'] = pool_seed
    codebook_path = cache.artifact('codebook', params, inputs, '.cbk', produce)
    codebook = cluster.load_codebook(codebook_path)
    report = cluster.cluster_size_report(codebook, pool, subsampled_from=subsampled_from)
    logger.info("Cluster sizes vs Zipf: L1 %.4f, KS %.4f", report.zipf_l1, report.ks_statistic)
    return codebook_path, codebook, report


def _bowe_kernels(config, cache, train_path, test_path, train, test, artifacts):
    table_path, train_vectors, test_vectors = _token_vectors(config, cache, train_path, train, test)
    artifacts['embeddings'] = table_path
    codebook_path, codebook, size_report = _fit_codebook(
        config, cache, [train_path, table_path], train_vectors)
    artifacts['codebook'] = codebook_path
    zipf_path = os.path.join(config.out_dir, 'cluster_sizes.csv')
    size_report.write_csv(zipf_path)
    artifacts['cluster_sizes'] = zipf_path

    def histogram_file(name, corpus_path, vectors):
        def produce(path):
            bowe.save_histograms(bowe.build_histograms(vectors, codebook), path)
        return cache.artifact(name, {}, [corpus_path, table_path, codebook_path], '.jsonl', produce)

    train_hist_path = histogram_file('bowe', train_path, train_vectors)
    artifacts['bowe'] = train_hist_path
    train_hists = bowe.load_histograms(train_hist_path)

    def produce_square(path):
        save_kernel(bowe.pq_kernel_matrix(train_hists, normalize=False, jobs=config.jobs), path)

    square_path = cache.artifact('pq', {}, [train_hist_path], '.kmat', produce_square)
    artifacts['pq'] = square_path
    square = load_kernel(square_path)
    cross = None
    test_hists = None
    if test is not None:
        test_hist_path = histogram_file('bowe-test', test_path, test_vectors)
        artifacts['bowe_test'] = test_hist_path
        test_hists = bowe.load_histograms(test_hist_path)

        def produce_cross(path):
            save_kernel(bowe.pq_kernel_cross(test_hists, train_hists, normalize=False,
                                             jobs=config.jobs), path)
        cross_path = cache.artifact('pq-cross', {}, [test_hist_path, train_hist_path], '.kmat',
                                    produce_cross)
        artifacts['pq_cross'] = cross_path
        cross = load_kernel(cross_path)
    if config.normalize:
        train_diag = square.diagonal()
        square = normalize_kernel(square, allow_zero_diagonal=True)
        if cross is not None:
            cross = normalize_cross(cross, bowe.pq_self_similarities(test_hists), train_diag,
                                    allow_zero_diagonal=True)
    return square, cross


def _label_indices(corpus, classes):
    index = {label: i for i, label in enumerate(classes)}
    return [index[review.label] for review in corpus.reviews]


def _write_run_manifest(config, artifacts):
    path = os.path.join(config.out_dir, 'manifest.json')
    files = {role: {'path': p, 'sha256': file_sha256(p)}
             for role, p in sorted(artifacts.items()) if p and os.path.exists(p)}
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({'config': config.to_dict(), 'files': files}, f, indent=2, sort_keys=True,
                  default=str)
    return path


def run_pipeline(config):
    """Run every stage the configured method needs and evaluate with the configured protocol"""
    cache = ArtifactCache(config.cache_dir)
    os.makedirs(config.out_dir, exist_ok=True)
    artifacts = {}

    with stage('corpus'):
        train_path, test_path = _prepare_corpora(config, cache)
        train = load_corpus(train_path)
        test = load_corpus(test_path) if test_path else None
        artifacts['train'] = train_path
        artifacts['test'] = test_path
        logger.info("Corpus: %d training and %d test reviews",
                    len(train), len(test) if test is not None else 0)

    squares, crosses = [], []
    if config.uses_hisk:
        with stage('hisk'):
            square, cross, paths = _hisk_kernels(config, cache, train_path, test_path, train, test)
            squares.append(square)
            crosses.append(cross)
            artifacts.update(paths)
    if config.uses_bowe:
        with stage('bowe'):
            square, cross = _bowe_kernels(config, cache, train_path, test_path, train, test,
                                          artifacts)
            squares.append(square)
            crosses.append(cross)

    with stage('fuse'):
        kernel = fuse_kernels(squares) if len(squares) > 1 else squares[0]
        cross_kernel = None
        if test is not None:
            cross_kernel = fuse_kernels(crosses) if len(crosses) > 1 else crosses[0]

    with stage('learn'):
        classes = list(train.label_set) if test is None else list(
            train.concat(test).label_set)
        if config.protocol == KFOLD_CV:
            report = kfold_cv(kernel, _label_indices(train, classes), config.folds,
                              derive_seed(config.seed, 'folds'), config.C, classes, config.jobs)
        else:
            model = ovr_train(kernel, _label_indices(train, classes), classes, config.C,
                              jobs=config.jobs)
            model_path = os.path.join(config.out_dir, 'model.json')
            save_model(model, model_path)
            artifacts['model'] = model_path
            report = evaluate_train_test(model, cross_kernel, _label_indices(test, classes),
                                         config.seed)

    with stage('report'):
        report_path = os.path.join(config.out_dir, 'report.json')
        save_report(report, report_path)
        confusion_path = os.path.join(config.out_dir, 'confusion.csv')
        write_confusion_csv(report, confusion_path)
        artifacts['report'] = report_path
        artifacts['confusion'] = confusion_path
        artifacts['manifest'] = _write_run_manifest(config, artifacts)
    logger.info("Accuracy %.4f (%d cache hits, %d misses)",
                report.accuracy, len(cache.hits), len(cache.misses))
    return PipelineResult(report, artifacts)
