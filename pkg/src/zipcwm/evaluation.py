"""Label alignment, confusion matrices, adjusted Rand index and dispersion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb


@dataclass(frozen=True, eq=False)
class ConfusionReport:
    """Rows are true labels, columns aligned predictions (both 1-based)."""

    matrix: np.ndarray
    per_class_misclassification: np.ndarray
    overall_misclassification: float
    accuracy: float
    permutation_used: dict

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "per_class_misclassification": self.per_class_misclassification.tolist(),
            "overall_misclassification": self.overall_misclassification,
            "accuracy": self.accuracy,
            "permutation_used": {str(k): v for k, v in self.permutation_used.items()},
        }


def _check_labels(labels, G: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 1 or labels.max() > G):
        raise ValueError(f"labels must lie in 1..{G}")
    return labels


def contingency(true_labels, predicted_labels, G: int) -> np.ndarray:
    t = _check_labels(true_labels, G)
    p = _check_labels(predicted_labels, G)
    if t.shape != p.shape:
        raise ValueError("label vectors differ in length")
    table = np.zeros((G, G), dtype=np.int64)
    np.add.at(table, (t - 1, p - 1), 1)
    return table


def align_labels(true_labels, predicted_labels, G: int, pin_first: bool = True) -> dict:
    """Relabeling ``predicted -> aligned`` that maximizes agreement.

    With ``pin_first`` label 1 (the structural-zero component) maps to itself
    and only the remaining labels may be permuted.
    """
    table = contingency(true_labels, predicted_labels, G)
    start = 1 if pin_first else 0
    sub = table[start:, start:]
    rows, cols = linear_sum_assignment(sub, maximize=True)
    mapping = {g: g for g in range(1, start + 1)}
    for r, c in zip(rows, cols):
        mapping[int(c) + start + 1] = int(r) + start + 1
    return mapping


def apply_mapping(labels, mapping: dict) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    lut = np.arange(max(mapping) + 1)
    for src, dst in mapping.items():
        lut[src] = dst
    return lut[labels]


def confusion(true_labels, predicted_labels, G: int, pin_first: bool = True) -> ConfusionReport:
    mapping = align_labels(true_labels, predicted_labels, G, pin_first)
    aligned = apply_mapping(predicted_labels, mapping)
    table = contingency(true_labels, aligned, G)
    totals = table.sum(axis=1)
    diag = np.diag(table)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(totals > 0, (totals - diag) / np.maximum(totals, 1), 0.0)
    n = int(table.sum())
    overall = float((n - diag.sum()) / n) if n else 0.0
    return ConfusionReport(
        matrix=table,
        per_class_misclassification=per_class,
        overall_misclassification=overall,
        accuracy=1.0 - overall,
        permutation_used=mapping,
    )


def adjusted_rand_index(true_labels, predicted_labels) -> float:
    """Pair-counting ARI (Hubert and Arabie).

    When the expected and maximum index coincide the result is 1 for
    identical partitions and 0 otherwise.
    """
    a = np.asarray(true_labels)
    b = np.asarray(predicted_labels)
    if a.shape != b.shape:
        raise ValueError("label vectors differ in length")
    n = a.size
    if n < 2:
        raise ValueError("ARI needs at least two observations")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    index = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(n, 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        same = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if same else 0.0
    return float((index - expected) / (max_index - expected))


def dispersion_statistic(y, fitted_means, n_params: int = 1) -> float:
    """Pearson chi-square over residual degrees of freedom ``n - n_params``."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(fitted_means, dtype=float)
    if np.any(~(mu > 0)):
        raise ValueError("fitted means must be positive")
    dof = y.size - n_params
    if dof <= 0:
        raise ValueError("no residual degrees of freedom")
    return float(np.sum((y - mu) ** 2 / mu) / dof)
