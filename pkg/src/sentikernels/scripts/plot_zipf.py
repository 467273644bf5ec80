"""Plot cluster sizes from a cluster-size CSV against the Zipf reference on log-log axes"""
import argparse
import csv

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402


def read_sizes(path):
    """(ranks, observed shares, Zipf shares) from a rank,size,p_r,q_r CSV"""
    ranks, p, q = [], [], []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for row in csv.DictReader(f):
            ranks.append(int(row['rank']))
            p.append(float(row['p_r']))
            q.append(float(row['q_r']))
    return ranks, p, q


def plot_zipf(csv_paths, out, labels=None):
    """One curve per CSV plus the reference; zero-share ranks are dropped from the log plot"""
    labels = labels or csv_paths
    fig, ax = plt.subplots(figsize=(6, 4))
    reference = None
    for path, label in zip(csv_paths, labels):
        ranks, p, q = read_sizes(path)
        points = [(r, share) for r, share in zip(ranks, p) if share > 0]
        ax.loglog([r for r, _ in points], [s for _, s in points], label=label)
        reference = reference or (ranks, q)
    if reference:
        ax.loglog(reference[0], reference[1], 'g--', label='Zipf')
    ax.set_xlabel('cluster rank')
    ax.set_ylabel('share of vectors')
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument('csv', nargs='+', help='cluster-size CSV files (e.g. k-means and SOM)')
    parser.add_argument('--labels', help='comma-separated curve labels')
    parser.add_argument('--out', default='zipf.png')
    args = parser.parse_args()
    plot_zipf(args.csv, args.out, args.labels.split(',') if args.labels else None)
