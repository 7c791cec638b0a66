"""Partition comparison: NMI, matched misclassification and exact recovery."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "contingency_table",
    "nmi",
    "misclassification_rate",
    "exact_recovery",
    "match_labels",
]


def _as_labels(a, name):
    a = np.asarray(a)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return a


def contingency_table(a, b) -> np.ndarray:
    """Counts matrix ``C[p, q] = #{i : a_i = p-th class, b_i = q-th class}``.

    Classes are the sorted distinct values of each argument, so labels need
    not be contiguous.
    """
    a = _as_labels(a, "a")
    b = _as_labels(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} != {b.size}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka = ai.max() + 1 if ai.size else 0
    kb = bi.max() + 1 if bi.size else 0
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts):
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b, average: str = "arithmetic") -> float:
    """Normalized mutual information with natural logs.

    ``average`` selects the normalizer: ``"arithmetic"`` gives
    ``2 I / (H(a) + H(b))``; ``"sqrt"`` gives ``I / sqrt(H(a) H(b))``. Two
    single-cluster partitions have NMI 1.
    """
    table = contingency_table(a, b)
    n = table.sum()
    if n == 0:
        raise ValueError("empty label vectors")
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha + hb == 0.0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    pa = table.sum(axis=1, keepdims=True) / n
    pb = table.sum(axis=0, keepdims=True) / n
    outer = (pa * pb)[nz]
    mi = float((pij * np.log(pij / outer)).sum())
    mi = max(mi, 0.0)
    if average == "arithmetic":
        val = 2.0 * mi / (ha + hb)
    elif average == "sqrt":
        if ha == 0.0 or hb == 0.0:
            return 0.0
        val = mi / np.sqrt(ha * hb)
    else:
        raise ValueError(f"unknown NMI normalization {average!r}")
    return float(min(max(val, 0.0), 1.0))


def match_labels(a, b) -> np.ndarray:
    """Relabel ``b`` to agree with ``a`` as far as a class bijection allows.

    Uses a maximum-weight matching on the contingency table. Classes of
    ``b`` left unmatched keep fresh indices past ``a``'s alphabet.
    """
    a = _as_labels(a, "a")
    b = _as_labels(b, "b")
    ua = np.unique(a)
    ub, bi = np.unique(b, return_inverse=True)
    table = contingency_table(a, b)
    rows, cols = linear_sum_assignment(-table)
    new_for_b = np.empty(ub.size, dtype=ua.dtype if ua.size else np.int64)
    assigned = np.zeros(ub.size, dtype=bool)
    for r, c in zip(rows, cols):
        new_for_b[c] = ua[r]
        assigned[c] = True
    fresh = (ua.max() + 1) if ua.size else 0
    for c in np.flatnonzero(~assigned):
        new_for_b[c] = fresh
        fresh += 1
    return new_for_b[bi]


def misclassification_rate(a, b) -> float:
    """Smallest mismatch fraction over bijections between class alphabets."""
    table = contingency_table(a, b)
    n = table.sum()
    if n == 0:
        return 0.0
    rows, cols = linear_sum_assignment(-table)
    return float(1.0 - table[rows, cols].sum() / n)


def exact_recovery(a, b) -> bool:
    """True iff ``b`` equals ``a`` after some permutation of class indices."""
    a = _as_labels(a, "a")
    b = _as_labels(b, "b")
    if a.shape != b.shape:
        return False
    if np.unique(a).size != np.unique(b).size:
        return False
    return bool(np.array_equal(match_labels(a, b), a))
