"""Independent reference implementations used as test oracles.

Nothing here imports the package; each function is written from the
definition with plain loops so it shares no code path with the library.
"""

import math

import numpy as np


def sample_size(N, z, p, e):
    return z**2 * p * (1 - p) / e**2, min(N, max(1, math.ceil((z**2 * p * (1 - p) / e**2) / (1 + z**2 * p * (1 - p) / (e**2 * N)))))


def dense_monarch(left, right):
    """L P R built entry by entry from the block lists."""
    b, m, _ = left.shape
    n = b * m
    L, R, P = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    for k in range(b):
        for i in range(m):
            for j in range(m):
                L[k * m + i, k * m + j] = left[k, i, j]
                R[k * m + i, k * m + j] = right[k, i, j]
    # read the vector as a b x m grid and emit it column by column
    row = 0
    for i in range(m):
        for j in range(b):
            P[row, j * m + i] = 1.0
            row += 1
    return L @ P @ R


def brute_accuracy(preds, labels):
    hits = 0
    for p, y in zip(preds, labels):
        hits += int(p == y)
    return hits / len(labels)


def brute_weighted_f1(pred_rows, label_rows):
    """Weighted F1 over binary rows via an explicit per-label confusion count,
    using F1 = 2PR / (P + R)."""
    n_labels = len(label_rows[0])
    total_support = 0
    acc = 0.0
    for c in range(n_labels):
        tp = fp = fn = 0
        for p, y in zip(pred_rows, label_rows):
            if p[c] and y[c]:
                tp += 1
            elif p[c]:
                fp += 1
            elif y[c]:
                fn += 1
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        acc += f1 * (tp + fn)
        total_support += tp + fn
    return acc / total_support if total_support else 0.0


def as_rows(indices, k):
    return [[int(i == c) for c in range(k)] for i in indices]


def lstsq_classifier(train_x, train_y, test_x, k):
    """One-vs-all least-squares linear classifier with a bias column."""
    A = np.hstack([train_x, np.ones((len(train_x), 1))])
    Y = np.eye(k)[train_y]
    W, *_ = np.linalg.lstsq(A, Y, rcond=None)
    return np.argmax(np.hstack([test_x, np.ones((len(test_x), 1))]) @ W, axis=1)
