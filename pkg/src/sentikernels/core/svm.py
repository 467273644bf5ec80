"""C-SVM trained by SMO on precomputed kernels, plus one-vs-rest multi-class models"""

import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import psutil
from joblib import Parallel, delayed

from sentikernels.core.errors import DegenerateLabels, FormatError, ManifestMismatch

logger = logging.getLogger(__name__)

# Tunable Parameters
# -----------------
# Regularization used throughout the experiments
DEFAULT_C = 1000.0
# Stop when the maximal KKT violation drops to this value
KKT_TOLERANCE = 1e-3
# Hard cap on pair updates
MAX_PAIR_UPDATES = 1_000_000
# Share of available memory the kernel-row cache may use for disk-backed kernels
ROW_CACHE_MEMORY_SHARE = 0.25
# Replaces a non-positive curvature along the update direction
TAU = 1e-12


def default_cache_rows(n_columns):
    """Kernel rows that fit in the configured share of available memory"""
    budget = psutil.virtual_memory().available * ROW_CACHE_MEMORY_SHARE
    return max(2, int(budget // max(1, n_columns * 8)))


class KernelRows:
    """Row access to a kernel matrix, with an LRU cache when the values live on disk"""

    def __init__(self, values, cache_rows=None):
        self.values = values
        self.cached = isinstance(values, np.memmap)
        self.capacity = cache_rows or default_cache_rows(values.shape[1])
        self._rows = OrderedDict()

    def __getitem__(self, i):
        if not self.cached:
            return self.values[i]
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            return row
        row = np.array(self.values[i], dtype=np.float64)
        self._rows[i] = row
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return row


@dataclass
class SvmModel:
    """Dual solution: signed coefficients alpha_i * y_i over the support samples"""
    train_ids: Tuple[str, ...]
    support_ids: Tuple[str, ...]
    alphas: np.ndarray
    bias: float
    C: float = DEFAULT_C
    recipe: dict = field(default_factory=dict)
    iterations: int = 0

    def to_dict(self):
        return {
            'train_ids': list(self.train_ids),
            'support_ids': list(self.support_ids),
            'alphas': [float(a) for a in self.alphas],
            'bias': float(self.bias),
            'C': float(self.C),
            'recipe': self.recipe,
            'iterations': self.iterations,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['train_ids']), tuple(data['support_ids']),
                   np.asarray(data['alphas'], dtype=np.float64), float(data['bias']),
                   float(data['C']), data.get('recipe', {}), int(data.get('iterations', 0)))


def _select_pair(alpha, y, grad, C):
    """Maximal violating pair: i from I_up maximizing -y G, j from I_low minimizing it"""
    score = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    i = int(np.argmax(np.where(up, score, -np.inf)))
    j = int(np.argmin(np.where(low, score, np.inf)))
    return i, j, score[i], score[j]


def _update_pair(alpha, y, grad, i, j, Ki, Kj, C):
    """Analytic two-variable solution clipped to the box, keeping sum(alpha * y) fixed"""
    qii, qjj, qij = Ki[i], Kj[j], y[i] * y[j] * Ki[j]
    ai, aj = alpha[i], alpha[j]
    if y[i] != y[j]:
        quad = max(qii + qjj + 2 * qij, TAU)
        delta = (-grad[i] - grad[j]) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > C:
                ai, aj = C, C - diff
        elif aj > C:
            aj, ai = C, C + diff
    else:
        quad = max(qii + qjj - 2 * qij, TAU)
        delta = (grad[i] - grad[j]) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
        elif aj < 0:
            aj, ai = 0.0, total
        if total > C:
            if aj > C:
                aj, ai = C, total - C
        elif ai < 0:
            ai, aj = 0.0, total
    return ai, aj


def dual_objective(alpha, y, values):
    """sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij"""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ (np.asarray(values) @ ay))


def svm_train(kernel, labels, C=DEFAULT_C, tol=KKT_TOLERANCE, max_updates=MAX_PAIR_UPDATES,
              cache_rows=None, objective_history=None):
    """Solve the C-SVM dual over a precomputed square kernel with SMO

    Args:
        kernel: KernelMatrix over the training samples
        labels: +1 / -1 per training sample, in kernel row order
        objective_history: optional list receiving the dual objective after every update
    """
    y = np.asarray(labels, dtype=np.float64)
    ids = kernel.ids
    if len(y) != len(ids):
        raise ManifestMismatch(f"{len(y)} labels for a kernel over {len(ids)} samples")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateLabels("SVM training needs both +1 and -1 samples")
    if not np.all(np.abs(y) == 1):
        raise ValueError("Binary SVM labels must be +1 or -1")

    rows = KernelRows(kernel.values, cache_rows)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    updates = 0
    while True:
        i, j, m_up, m_low = _select_pair(alpha, y, grad, C)
        if m_up - m_low <= tol:
            break
        if updates >= max_updates:
            logger.warning("SMO stopped after %d pair updates (KKT gap %.2e)", updates, m_up - m_low)
            break
        Ki, Kj = rows[i], rows[j]
        old_i, old_j = alpha[i], alpha[j]
        alpha[i], alpha[j] = _update_pair(alpha, y, grad, i, j, Ki, Kj, C)
        # G = Q alpha - e with Q_ts = y_t y_s K_ts
        grad += y * (y[i] * (alpha[i] - old_i) * Ki + y[j] * (alpha[j] - old_j) * Kj)
        updates += 1
        if objective_history is not None:
            objective_history.append(-0.5 * float(alpha @ (grad - 1.0)))

    score = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(score[free].mean())
    else:
        _, _, m_up, m_low = _select_pair(alpha, y, grad, C)
        bias = float((m_up + m_low) / 2)
    support = np.flatnonzero(alpha > 0)
    logger.debug("SMO finished: %d updates, %d support vectors", updates, len(support))
    return SvmModel(
        train_ids=ids,
        support_ids=tuple(ids[s] for s in support),
        alphas=alpha[support] * y[support],
        bias=bias,
        C=C,
        recipe=dict(kernel.recipe),
        iterations=updates,
    )


def _support_columns(model, kernel):
    if kernel.col_ids != model.train_ids:
        raise ManifestMismatch("Kernel columns do not match the model's training manifest")
    position = {sample_id: i for i, sample_id in enumerate(model.train_ids)}
    return np.array([position[s] for s in model.support_ids], dtype=np.int64)


def decision_function(model, kernel):
    """f(x) = sum_i alphas_i K(x, x_i) + bias for every kernel row"""
    cols = _support_columns(model, kernel)
    if len(cols) == 0:
        return np.full(kernel.shape[0], model.bias)
    return np.asarray(kernel.values[:, cols], dtype=np.float64) @ model.alphas + model.bias


def svm_predict(model, kernel):
    """(labels, decision values); f = 0 predicts +1"""
    values = decision_function(model, kernel)
    return np.where(values >= 0, 1, -1), values


@dataclass
class OvrModel:
    """One binary model per class; two classes share a single model"""
    classes: List
    models: List[SvmModel]

    def to_dict(self):
        return {'classes': list(self.classes), 'models': [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, data):
        return cls(list(data['classes']), [SvmModel.from_dict(m) for m in data['models']])


def ovr_train(kernel, labels, classes=None, C=DEFAULT_C, jobs=1, **kwargs):
    """Train class-vs-rest models; labels are class indices into `classes`"""
    labels = np.asarray(labels, dtype=np.int64)
    if classes is None:
        classes = list(range(int(labels.max()) + 1)) if len(labels) else []
    if len(classes) < 2:
        raise DegenerateLabels("Multi-class training needs at least two classes")
    present = set(labels.tolist())
    missing = [c for i, c in enumerate(classes) if i not in present]
    if missing:
        raise DegenerateLabels(f"Classes {missing} have no training samples")
    if len(classes) == 2:
        models = [svm_train(kernel, np.where(labels == 1, 1, -1), C, **kwargs)]
    else:
        models = Parallel(n_jobs=jobs, require='sharedmem')(
            delayed(svm_train)(kernel, np.where(labels == c, 1, -1), C, **kwargs)
            for c in range(len(classes)))
    return OvrModel(list(classes), list(models))


def ovr_decision(model, kernel):
    """Decision values, one column per class"""
    if len(model.classes) == 2:
        f = decision_function(model.models[0], kernel)
        return np.stack((-f, f), axis=1)
    return np.stack([decision_function(m, kernel) for m in model.models], axis=1)


def ovr_predict(model, kernel):
    """Class index per row: argmax decision, lowest class on ties (f >= 0 is class 1 for two classes)"""
    if len(model.classes) == 2:
        return np.where(decision_function(model.models[0], kernel) >= 0, 1, 0)
    return np.argmax(ovr_decision(model, kernel), axis=1)


def save_model(model, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model.to_dict(), f, indent=2, ensure_ascii=False)


def load_model(path):
    """Load an OvrModel or a bare SvmModel JSON file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid model JSON") from e
    if 'models' in data:
        return OvrModel.from_dict(data)
    return SvmModel.from_dict(data)
