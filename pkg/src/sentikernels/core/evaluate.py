"""Evaluation protocols: stratified k-fold cross-validation and train/test accuracy"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from sentikernels.core.errors import ManifestMismatch, StratificationImpossible
from sentikernels.core.svm import DEFAULT_C, ovr_predict, ovr_train

logger = logging.getLogger(__name__)

TRAIN_TEST = 'train_test'
KFOLD_CV = 'kfold_cv'


@dataclass
class EvalReport:
    """Accuracy and confusion matrix (rows = true class, columns = predicted class)

    For KFOLD_CV, `accuracy` is pooled over all folds; it equals the mean
    of `per_fold` when every fold has the same size.
    """
    protocol: str
    accuracy: float
    confusion: np.ndarray
    seed: int
    classes: List = field(default_factory=list)
    per_fold: Optional[List[float]] = None

    def to_dict(self):
        return {
            'protocol': self.protocol,
            'accuracy': self.accuracy,
            'per_fold': self.per_fold,
            'confusion': [[int(v) for v in row] for row in self.confusion],
            'classes': [str(c) for c in self.classes],
            'seed': self.seed,
        }

    def to_json(self):
        """Canonical JSON; identical reports serialize to identical bytes"""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confusion_matrix(true, predicted, n_classes):
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(true, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return matrix


def accuracy_from_confusion(matrix):
    total = matrix.sum()
    return float(np.trace(matrix) / total) if total else 0.0


def stratified_folds(labels, folds, seed):
    """Test positions per fold: each class is shuffled and dealt round-robin

    The dealing position carries over from one class to the next, so fold
    sizes differ by at most one.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if folds < 2 or folds > n:
        raise StratificationImpossible(f"Cannot build {folds} folds over {n} samples")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    turn = 0
    for label in np.unique(labels):
        positions = np.flatnonzero(labels == label)
        if len(positions) < folds:
            logger.warning("Class %s has %d samples for %d folds; some folds will lack it",
                           label, len(positions), folds)
        for position in positions[rng.permutation(len(positions))]:
            assignment[position] = turn % folds
            turn += 1
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def _run_fold(kernel, labels, classes, train_rows, test_rows, C, fold):
    train_labels = labels[train_rows]
    present = np.unique(train_labels)
    test_kernel = kernel.submatrix(test_rows, train_rows)
    if len(present) < len(classes):
        # a training fold without some class cannot fit one-vs-rest models
        if len(present) == 1:
            logger.warning("Fold %d trains on a single class; predicting it for every test sample",
                           fold)
            return np.full(len(test_rows), present[0], dtype=np.int64)
        logger.warning("Fold %d lacks classes %s in training",
                       fold, sorted(set(range(len(classes))) - set(present.tolist())))
        remap = {c: i for i, c in enumerate(present.tolist())}
        model = ovr_train(kernel.submatrix(train_rows, train_rows),
                          np.array([remap[c] for c in train_labels]),
                          [classes[c] for c in present], C)
        return present[ovr_predict(model, test_kernel)]
    model = ovr_train(kernel.submatrix(train_rows, train_rows), train_labels, classes, C)
    return ovr_predict(model, test_kernel)


def kfold_cv(kernel, labels, folds=10, seed=0, C=DEFAULT_C, classes=None, jobs=1):
    """Stratified k-fold CV over a square kernel; labels are class indices"""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(kernel.ids):
        raise ManifestMismatch(f"{len(labels)} labels for a kernel over {len(kernel.ids)} samples")
    if classes is None:
        classes = list(range(int(labels.max()) + 1))
    test_folds = stratified_folds(labels, folds, seed)
    everything = np.arange(len(labels))
    predictions = Parallel(n_jobs=jobs)(
        delayed(_run_fold)(kernel, labels, classes, np.setdiff1d(everything, test_rows),
                           test_rows, C, f)
        for f, test_rows in enumerate(test_folds))

    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    per_fold = []
    for f, (test_rows, predicted) in enumerate(zip(test_folds, predictions)):
        fold_confusion = confusion_matrix(labels[test_rows], predicted, len(classes))
        confusion += fold_confusion
        per_fold.append(accuracy_from_confusion(fold_confusion))
        logger.info("Fold %d/%d accuracy: %.4f", f + 1, folds, per_fold[-1])
    report = EvalReport(KFOLD_CV, accuracy_from_confusion(confusion), confusion, seed,
                        list(classes), per_fold)
    logger.info("%d-fold CV accuracy: %.4f", folds, report.accuracy)
    return report


def evaluate_train_test(model, cross_kernel, labels, seed=0):
    """Accuracy of a trained OvR model on a test x train kernel block"""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != cross_kernel.shape[0]:
        raise ManifestMismatch(f"{len(labels)} labels for {cross_kernel.shape[0]} test rows")
    predicted = ovr_predict(model, cross_kernel)
    confusion = confusion_matrix(labels, predicted, len(model.classes))
    report = EvalReport(TRAIN_TEST, accuracy_from_confusion(confusion), confusion, seed,
                        list(model.classes))
    logger.info("Test accuracy: %.4f", report.accuracy)
    return report


def save_report(report, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(report.to_json() + '\n')


def write_confusion_csv(report, path):
    """Confusion matrix as CSV with class names on both axes"""
    names = [str(c) for c in report.classes]
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['true\\predicted'] + names)
        for name, row in zip(names, report.confusion):
            writer.writerow([name] + [int(v) for v in row])
