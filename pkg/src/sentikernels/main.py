"""sentikernels command line"""

import argparse
import json
import logging
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from sentikernels.core import bowe, cluster, embed, hisk
from sentikernels.core.cbow import CbowConfig, CbowTrainer
from sentikernels.core.config import EMBEDDINGS, METHODS, PROTOCOLS, Config, default_jobs
from sentikernels.core.corpus import corpus_stats, load_corpus, save_corpus, split_train_test
from sentikernels.core.errors import ManifestMismatch, SentiKernelsError
from sentikernels.core.evaluate import (
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
from sentikernels.core.pipeline import run_pipeline
from sentikernels.core.svm import DEFAULT_C, load_model, ovr_train, save_model

logger = logging.getLogger(__name__)

# `run` flags that override top-level config keys of the same name
RUN_FLAGS = (
    'corpus', 'train', 'test', 'train_fraction', 'method', 'ngrams', 'normalize', 'embedding',
    'embedding_path', 'clusterer', 'k', 'pool_cap', 'C', 'protocol', 'folds', 'seed',
    'cache_dir', 'out_dir', 'jobs',
)


def _print_json(data):
    print(json.dumps(data, indent=2, sort_keys=True))


def _ngrams(value):
    try:
        return tuple(int(n) for n in value.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _grid(value):
    try:
        rows, cols = value.lower().split('x')
        return int(rows), int(cols)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {value!r}")


def _labels_for(kernel_ids, corpus_path):
    """Class indices of the kernel's samples, looked up by id in a corpus"""
    corpus = load_corpus(corpus_path)
    by_id = dict(zip(corpus.ids, corpus.label_indices()))
    missing = [sample_id for sample_id in kernel_ids if sample_id not in by_id]
    if missing:
        raise ManifestMismatch(f"{len(missing)} kernel samples (e.g. {missing[0]!r}) "
                               f"are not in {corpus_path}")
    return np.array([by_id[sample_id] for sample_id in kernel_ids]), list(corpus.label_set)


def _document_vectors(args, corpus):
    if args.contextual:
        return embed.join_contextual(embed.load_contextual_dump(args.contextual), corpus.ids)
    return embed.corpus_vectors(corpus, embed.load_embeddings(args.embeddings))


# corpus
def cmd_corpus_stats(args):
    _print_json(corpus_stats(load_corpus(args.path)).to_dict())


def cmd_corpus_split(args):
    train, test = split_train_test(load_corpus(args.path), args.fraction, args.seed)
    save_corpus(train, args.out_train)
    save_corpus(test, args.out_test)
    logger.info("Split into %d training and %d test reviews", len(train), len(test))


# embed
def cmd_embed_train(args):
    config = CbowConfig(dim=args.dim, window=args.window, negatives=args.negatives,
                        epochs=args.epochs, initial_lr=args.lr, min_count=args.min_count,
                        seed=args.seed)
    trainer = CbowTrainer(config)
    table = trainer.train(load_corpus(args.input).tokens(), workers=args.workers)
    embed.save_embeddings(table, args.out)
    _print_json({'vocab_size': len(table), 'dim': table.dim, 'epoch_losses': trainer.epoch_losses})


def cmd_embed_check(args):
    if args.contextual:
        docs = embed.load_contextual_dump(args.path)
        _print_json({'documents': len(docs), 'token_vectors': sum(len(d) for d in docs),
                     'dim': next((d.vectors.shape[1] for d in docs if len(d)), 0)})
    else:
        _print_json(embed.table_summary(embed.load_embeddings(args.path)))


# cluster
def cmd_cluster_fit(args):
    corpus = load_corpus(args.corpus)
    pool, subsampled_from = cluster.pool_vectors(_document_vectors(args, corpus), args.pool_cap,
                                                 args.seed)
    if args.method == cluster.SOM:
        overrides = {'seed': args.seed}
        if args.epochs:
            overrides['epochs'] = args.epochs
        if args.grid:
            config = cluster.SomConfig(k=args.k, grid_rows=args.grid[0], grid_cols=args.grid[1],
                                       **overrides)
        else:
            config = cluster.SomConfig.for_k(args.k, **overrides)
        codebook = cluster.som_fit(pool, config)
    else:
        codebook = cluster.kmeans_fit(pool, args.k, args.seed)
    cluster.save_codebook(codebook, args.out)
    report = cluster.cluster_size_report(codebook, pool, args.zipf_exponent, subsampled_from)
    if args.sizes_csv:
        report.write_csv(args.sizes_csv)
    _print_json({'k': codebook.k, 'zipf_l1': report.zipf_l1, 'ks_statistic': report.ks_statistic,
                 'subsampled_from': subsampled_from})


def cmd_cluster_report(args):
    codebook = cluster.load_codebook(args.codebook)
    corpus = load_corpus(args.corpus)
    pool, subsampled_from = cluster.pool_vectors(_document_vectors(args, corpus), args.pool_cap,
                                                 args.seed)
    report = cluster.cluster_size_report(codebook, pool, args.zipf_exponent, subsampled_from)
    report.write_csv(args.out)
    _print_json({'zipf_l1': report.zipf_l1, 'ks_statistic': report.ks_statistic})


# bowe
def cmd_bowe_build(args):
    codebook = cluster.load_codebook(args.codebook)
    corpus = load_corpus(args.corpus)
    bowe.save_histograms(bowe.build_histograms(_document_vectors(args, corpus), codebook), args.out)


# kernel
def cmd_kernel_hisk(args):
    corpus = load_corpus(args.corpus)
    kernel = hisk.compute_hisk_matrix(corpus.documents(), args.ngrams, corpus.ids, args.jobs)
    if args.normalize:
        kernel = normalize_kernel(kernel, allow_zero_diagonal=True)
    save_kernel(kernel, args.out)


def cmd_kernel_hisk_cross(args):
    rows, cols = load_corpus(args.rows), load_corpus(args.cols)
    kernel = hisk.compute_hisk_cross(rows.documents(), cols.documents(), args.ngrams,
                                     rows.ids, cols.ids, args.jobs)
    if args.normalize:
        kernel = normalize_cross(kernel, hisk.self_similarities(rows.documents(), args.ngrams),
                                 hisk.self_similarities(cols.documents(), args.ngrams),
                                 allow_zero_diagonal=True)
    save_kernel(kernel, args.out)


def cmd_kernel_pq(args):
    kernel = bowe.pq_kernel_matrix(bowe.load_histograms(args.histograms),
                                   normalize=args.normalize, jobs=args.jobs)
    save_kernel(kernel, args.out)


def cmd_kernel_pq_cross(args):
    kernel = bowe.pq_kernel_cross(bowe.load_histograms(args.rows), bowe.load_histograms(args.cols),
                                  normalize=args.normalize, jobs=args.jobs)
    save_kernel(kernel, args.out)


def cmd_kernel_fuse(args):
    save_kernel(fuse_kernels(load_kernel(path) for path in args.inputs.split(',')), args.out)


# learn
def cmd_train(args):
    kernel = load_kernel(args.kernel, mmap=args.mmap)
    labels, classes = _labels_for(kernel.ids, args.labels)
    model = ovr_train(kernel, labels, classes, args.C, jobs=args.jobs)
    save_model(model, args.out)
    logger.info("Trained %d model(s) over %d samples", len(model.models), len(labels))


def _emit_report(report, args):
    if args.out:
        save_report(report, args.out)
    if args.confusion:
        write_confusion_csv(report, args.confusion)
    print(report.to_json())


def cmd_eval_test(args):
    model = load_model(args.model)
    cross = load_kernel(args.cross)
    corpus_labels, corpus_classes = _labels_for(cross.row_ids, args.labels)
    # class indices follow the model's class order
    position = {c: i for i, c in enumerate(model.classes)}
    unknown = {corpus_classes[i] for i in corpus_labels} - set(position)
    if unknown:
        raise ManifestMismatch(f"Test labels {sorted(unknown)} are unknown to the model")
    labels = [position[corpus_classes[i]] for i in corpus_labels]
    _emit_report(evaluate_train_test(model, cross, labels, args.seed), args)


def cmd_eval_cv(args):
    kernel = load_kernel(args.kernel, mmap=args.mmap)
    labels, classes = _labels_for(kernel.ids, args.labels)
    _emit_report(kfold_cv(kernel, labels, args.folds, args.seed, args.C, classes, args.jobs), args)


def _setting(value):
    """KEY=VALUE with a TOML scalar value; bare words are strings"""
    key, sep, raw = value.partition('=')
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {value!r}")
    try:
        parsed = tomllib.loads(f"v = {raw.strip()}")['v']
    except tomllib.TOMLDecodeError:
        parsed = raw.strip()
    return key.strip(), parsed


def cmd_run(args):
    config = Config(args.config)
    for table in ('cbow', 'som'):
        settings = getattr(args, table)
        if settings:
            config.set(table, dict(config.get(table), **dict(settings)))
    config.update({key: getattr(args, key) for key in RUN_FLAGS})
    result = run_pipeline(config.to_run_config())
    print(result.report.to_json())


def build_parser():
    parser = argparse.ArgumentParser(
        prog='sentikernels',
        description='String kernels and word-embedding histograms for sentiment classification')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    parser.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    jobs = argparse.ArgumentParser(add_help=False)
    jobs.add_argument('--jobs', type=int, default=None, help='worker cap (default: physical cores)')

    corpus = commands.add_parser('corpus', help='corpus statistics and splits')
    corpus_commands = corpus.add_subparsers(dest='action', required=True)
    p = corpus_commands.add_parser('stats')
    p.add_argument('path', help='JSONL corpus')
    p.set_defaults(func=cmd_corpus_stats)
    p = corpus_commands.add_parser('split')
    p.add_argument('path', help='JSONL corpus')
    p.add_argument('--fraction', type=float, default=0.8, help='training share')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-train', required=True)
    p.add_argument('--out-test', required=True)
    p.set_defaults(func=cmd_corpus_split)

    embed_parser = commands.add_parser('embed', help='word embeddings')
    embed_commands = embed_parser.add_subparsers(dest='action', required=True)
    p = embed_commands.add_parser('train')
    p.add_argument('--in', '--corpus', dest='input', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--dim', type=int, default=300)
    p.add_argument('--window', type=int, default=5)
    p.add_argument('--negatives', type=int, default=5)
    p.add_argument('--epochs', type=int, default=5)
    p.add_argument('--lr', type=float, default=0.025)
    p.add_argument('--min-count', type=int, default=5)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--workers', type=int, default=1)
    p.set_defaults(func=cmd_embed_train)
    p = embed_commands.add_parser('check')
    p.add_argument('path', help='word2vec text table, or a token-vector dump with --contextual')
    p.add_argument('--contextual', action='store_true', help='input is a JSONL token-vector dump')
    p.set_defaults(func=cmd_embed_check)

    vectors = argparse.ArgumentParser(add_help=False)
    vectors.add_argument('--in', '--corpus', dest='corpus', required=True)
    source = vectors.add_mutually_exclusive_group(required=True)
    source.add_argument('--vectors', '--embeddings', dest='embeddings', help='word2vec text table')
    source.add_argument('--contextual', help='JSONL token-vector dump')

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument('--pool-cap', type=int, default=cluster.POOL_CAP)
    sampling.add_argument('--seed', type=int, default=0)
    sampling.add_argument('--zipf-exponent', type=float, default=1.0)

    cluster_parser = commands.add_parser('cluster', help='embedding codebooks')
    cluster_commands = cluster_parser.add_subparsers(dest='action', required=True)
    p = cluster_commands.add_parser('fit', parents=[vectors, sampling])
    p.add_argument('--method', choices=(cluster.KMEANS, cluster.SOM), default=cluster.KMEANS)
    p.add_argument('--k', type=int, default=cluster.DEFAULT_K)
    p.add_argument('--grid', type=_grid, help='SOM grid as ROWSxCOLS')
    p.add_argument('--epochs', type=int, help='SOM epochs')
    p.add_argument('--out', required=True)
    p.add_argument('--sizes-csv', help='write the cluster-size CSV here')
    p.set_defaults(func=cmd_cluster_fit)
    p = cluster_commands.add_parser('report', parents=[vectors, sampling])
    p.add_argument('--codebook', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_cluster_report)

    bowe_parser = commands.add_parser('bowe', help='bag-of-word-embeddings histograms')
    bowe_commands = bowe_parser.add_subparsers(dest='action', required=True)
    p = bowe_commands.add_parser('build', parents=[vectors])
    p.add_argument('--codebook', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_bowe_build)

    kernel = commands.add_parser('kernel', help='kernel matrices')
    kernel_commands = kernel.add_subparsers(dest='action', required=True)
    normalization = argparse.ArgumentParser(add_help=False)
    normalization.add_argument('--normalize', action=argparse.BooleanOptionalAction, default=True)
    p = kernel_commands.add_parser('hisk', parents=[jobs, normalization])
    p.add_argument('--in', '--corpus', dest='corpus', required=True)
    p.add_argument('--ngrams', type=_ngrams, default=hisk.DEFAULT_NGRAMS)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_kernel_hisk)
    p = kernel_commands.add_parser('hisk-cross', parents=[jobs, normalization])
    p.add_argument('--rows', required=True, help='corpus of the row samples (e.g. test)')
    p.add_argument('--cols', required=True, help='corpus of the column samples (e.g. train)')
    p.add_argument('--ngrams', type=_ngrams, default=hisk.DEFAULT_NGRAMS)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_kernel_hisk_cross)
    p = kernel_commands.add_parser('pq', parents=[jobs, normalization])
    p.add_argument('--in', '--histograms', dest='histograms', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_kernel_pq)
    p = kernel_commands.add_parser('pq-cross', parents=[jobs, normalization])
    p.add_argument('--rows', required=True)
    p.add_argument('--cols', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_kernel_pq_cross)
    p = kernel_commands.add_parser('fuse')
    p.add_argument('--in', dest='inputs', required=True, help='comma-separated kernel files')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_kernel_fuse)

    p = commands.add_parser('train', parents=[jobs], help='train SVMs on a kernel')
    p.add_argument('--kernel', required=True)
    p.add_argument('--labels', required=True, help='corpus holding the labels')
    p.add_argument('--C', type=float, default=DEFAULT_C)
    p.add_argument('--mmap', action='store_true', help='keep the kernel on disk')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train)

    report = argparse.ArgumentParser(add_help=False)
    report.add_argument('--out', help='write the report JSON here')
    report.add_argument('--confusion', help='write the confusion matrix CSV here')
    eval_parser = commands.add_parser('eval', help='evaluate models')
    eval_commands = eval_parser.add_subparsers(dest='action', required=True)
    p = eval_commands.add_parser('test', parents=[report])
    p.add_argument('--model', required=True)
    p.add_argument('--cross', required=True, help='test x train kernel')
    p.add_argument('--labels', required=True)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_eval_test)
    p = eval_commands.add_parser('cv', parents=[report, jobs])
    p.add_argument('--kernel', required=True)
    p.add_argument('--labels', required=True)
    p.add_argument('--folds', type=int, default=10)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--C', type=float, default=DEFAULT_C)
    p.add_argument('--mmap', action='store_true')
    p.set_defaults(func=cmd_eval_cv)

    p = commands.add_parser('run', parents=[jobs],
                            help='end-to-end pipeline; flags override the TOML config')
    p.add_argument('--config', help='TOML run config')
    p.add_argument('--corpus', help='single corpus, split on the fly')
    p.add_argument('--train')
    p.add_argument('--test')
    p.add_argument('--train-fraction', type=float)
    p.add_argument('--method', choices=METHODS)
    p.add_argument('--ngrams', type=_ngrams)
    p.add_argument('--normalize', action=argparse.BooleanOptionalAction, default=None)
    p.add_argument('--embedding', choices=EMBEDDINGS)
    p.add_argument('--embedding-path')
    p.add_argument('--clusterer', choices=(cluster.KMEANS, cluster.SOM))
    p.add_argument('--k', type=int)
    p.add_argument('--pool-cap', type=int)
    p.add_argument('--C', type=float)
    p.add_argument('--protocol', choices=tuple(PROTOCOLS))
    p.add_argument('--folds', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--cache-dir')
    p.add_argument('--out-dir')
    p.add_argument('--cbow', type=_setting, action='append', metavar='KEY=VALUE',
                   help='CBOW setting, e.g. --cbow epochs=3 (repeatable)')
    p.add_argument('--som', type=_setting, action='append', metavar='KEY=VALUE',
                   help='SOM setting, e.g. --som epochs=50 (repeatable)')
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='[%(levelname)s] %(message)s')
    if getattr(args, 'jobs', None) is None and args.func is not cmd_run:
        args.jobs = default_jobs()
    try:
        args.func(args)
    except SentiKernelsError as e:
        if e.stage is None:
            e.stage = ' '.join(filter(None, (args.command, getattr(args, 'action', None))))
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        stage = ' '.join(filter(None, (args.command, getattr(args, 'action', None))))
        print(json.dumps({'stage': stage, 'error': type(e).__name__, 'message': str(e)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
