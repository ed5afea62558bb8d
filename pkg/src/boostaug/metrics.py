from __future__ import annotations

from typing import Sequence


def accuracy(gold: Sequence, pred: Sequence) -> float:
    if not gold:
        raise ValueError("accuracy of an empty set")
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def per_class_f1(gold: Sequence, pred: Sequence, labels: Sequence) -> list[float]:
    """F1 per label; a 0/0 precision or recall counts as 0."""
    scores = []
    for lab in labels:
        tp = sum(g == lab and p == lab for g, p in zip(gold, pred))
        fp = sum(g != lab and p == lab for g, p in zip(gold, pred))
        fn = sum(g == lab and p != lab for g, p in zip(gold, pred))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return scores


def macro_f1(gold: Sequence, pred: Sequence, labels: Sequence) -> float:
    f1 = per_class_f1(gold, pred, labels)
    return sum(f1) / len(f1)
