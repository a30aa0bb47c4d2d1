"""Slow, loop-based reference implementations used as independent test oracles."""

import math


def topk(row, k):
    """Indices of the k largest entries, lower index first among equals."""
    return set(sorted(range(len(row)), key=lambda i: (-float(row[i]), i))[:k])


def counts(probs, k):
    m = len(probs[0])
    n = [0] * m
    for row in probs:
        for i in topk(row, k):
            n[i] += 1
    return n


def mean_num(probs, k):
    s = len(probs)
    return [c / (k * s) for c in counts(probs, k)]


def mean_prob(probs, k):
    m = len(probs[0])
    mass = [0.0] * m
    for row in probs:
        for i in topk(row, k):
            mass[i] += float(row[i])
    total = math.fsum(mass)
    return [v / total for v in mass]


def combined(probs, k):
    return mean_num(probs, k) + mean_prob(probs, k)


def accuracy(pred, truth):
    hits = 0
    for p, t in zip(pred, truth):
        if p == t:
            hits += 1
    return 100.0 * hits / len(truth)


def confusion(pred, truth, n_classes):
    rows = []
    for i in range(n_classes):
        members = [p for p, t in zip(pred, truth) if t == i]
        if not members:
            rows.append([0.0] * n_classes)
            continue
        rows.append([100.0 * sum(1 for p in members if p == j) / len(members) for j in range(n_classes)])
    return rows
