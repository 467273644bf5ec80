"""Write a planted-polarity review corpus (and optionally a matching static embedding table)"""
import argparse
import logging

from sentikernels.core.corpus import corpus_stats, save_corpus
from sentikernels.core.embed import save_embeddings
from sentikernels.core.synthetic import planted_embeddings, planted_polarity_corpus

logger = logging.getLogger(__name__)


def make_corpus(out, n_docs=200, seed=0, embeddings_out=None, dim=16):
    """Generate the corpus, write it as JSONL and return its statistics"""
    corpus = planted_polarity_corpus(n_docs=n_docs, seed=seed)
    save_corpus(corpus, out)
    if embeddings_out:
        save_embeddings(planted_embeddings(corpus, dim=dim, seed=seed), embeddings_out)
    stats = corpus_stats(corpus)
    logger.info("Wrote %d reviews to %s (%s)", stats.total_samples, out, stats.samples_per_label)
    return stats


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument('--out', required=True)
    parser.add_argument('--docs', type=int, default=200)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--embeddings-out')
    parser.add_argument('--dim', type=int, default=16)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='[%(levelname)s] %(message)s')
    make_corpus(args.out, args.docs, args.seed, args.embeddings_out, args.dim)
