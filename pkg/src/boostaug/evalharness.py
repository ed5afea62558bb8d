"""Downstream training/evaluation and the augmentation-count sweep."""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .backends import generate
from .boost import BoostRunConfig, boost_augment
from .corpus import ConfigError, Dataset, from_records
from .metrics import accuracy, per_class_f1
from .surrogate import CooccurrenceNeighbors, NaiveBayes, argmax_label, normalize_tokens

MODES = ("none", "raw_backend", "monoaug", "boostaug")
ALPHA_GRID = (1.0, 0.5, 0.1)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    macro_f1: float
    per_class_f1: tuple[float, ...]
    n_train: int
    n_test: int
    seed: int
    labels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "per_class_f1": list(self.per_class_f1),
                "labels": list(self.labels), "n_train": self.n_train, "n_test": self.n_test, "seed": self.seed}


class TextClassifier:
    def __init__(self, labels, nb: NaiveBayes, n_train: int, seed: int):
        self.labels = tuple(labels)
        self.nb = nb
        self.n_train = n_train
        self.seed = seed

    def predict(self, texts: Sequence[str]) -> list[str]:
        return [argmax_label(self.nb.posterior(normalize_tokens(t)), self.labels) for t in texts]


def train_classifier(train: Dataset, valid: Dataset | None = None, config=None, seed: int = 0) -> TextClassifier:
    """Naive Bayes text classifier; smoothing picked by validation accuracy (alpha=1 if no valid set)."""
    present = {ex.label for ex in train}
    missing = [lab for lab in train.labels if lab not in present]
    if missing:
        raise ConfigError(f"label(s) {missing} absent from the training set")
    seqs = [normalize_tokens(t) for t in train.texts]
    targets = [train.label_index(ex.label) for ex in train]
    grid = ALPHA_GRID if valid is not None and len(valid) else ALPHA_GRID[:1]
    best = None
    for alpha in grid:
        nb = NaiveBayes(len(train.labels), alpha).fit(seqs, targets)
        clf = TextClassifier(train.labels, nb, len(train), seed)
        score = accuracy([ex.label for ex in valid], clf.predict(valid.texts)) if len(grid) > 1 else 0.0
        if best is None or score > best[0]:
            best = (score, clf)
    return best[1]


def evaluate(classifier: TextClassifier, test: Dataset) -> EvalResult:
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    if tuple(test.labels) != classifier.labels and not set(test.labels) <= set(classifier.labels):
        raise ConfigError(f"test labels {test.labels} not covered by classifier labels {classifier.labels}")
    gold = [ex.label for ex in test]
    pred = classifier.predict(test.texts)
    f1 = per_class_f1(gold, pred, classifier.labels)
    return EvalResult(accuracy(gold, pred), sum(f1) / len(f1), tuple(f1), classifier.n_train, len(test),
                      classifier.seed, classifier.labels)


def raw_augment(dataset: Dataset, config: BoostRunConfig) -> Dataset:
    """Unfiltered backend output: originals plus the first N candidates per example."""
    proposer = None
    if config.transform.strategy == "embed_sub":
        proposer = CooccurrenceNeighbors().fit([normalize_tokens(t) for t in dataset.texts])
    rows = []
    for ex in dataset:
        if config.include_originals:
            rows.append((ex.text, ex.label, ex.aspect, ex.aspect_span))
        for c in generate(ex, config.filters.keep_per_example, config.transform, proposer, config.seed):
            rows.append((c.text, ex.label, c.aspect, c.aspect_span))
    return from_records(rows, labels=dataset.labels, task=dataset.task, require_two_labels=False)


def augment_for_mode(dataset: Dataset, mode: str, n: int, seed: int, base: BoostRunConfig) -> Dataset:
    config = replace(base, seed=seed, filters=replace(base.filters, keep_per_example=n))
    if mode == "none":
        return dataset
    if mode == "raw_backend":
        return raw_augment(dataset, config)
    if mode == "monoaug":
        return boost_augment(dataset, replace(config, mode="mono")).dataset
    if mode == "boostaug":
        return boost_augment(dataset, replace(config, mode="cross")).dataset
    raise ConfigError(f"unknown sweep mode {mode!r}; choose from {MODES}")


@dataclass(frozen=True)
class SweepRow:
    mode: str
    n: int
    acc_mean: float
    acc_stderr: float
    f1_mean: float
    f1_stderr: float
    runs: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    cells: list[dict] = field(default_factory=list)

    def row(self, mode: str, n: int) -> SweepRow:
        return next(r for r in self.rows if r.mode == mode and r.n == n)

    def to_tsv(self) -> str:
        lines = ["mode\tn\tacc_mean\tacc_stderr\tf1_mean\tf1_stderr"]
        for r in self.rows:
            lines.append(f"{r.mode}\t{r.n}\t{r.acc_mean:.10f}\t{r.acc_stderr:.10f}\t"
                         f"{r.f1_mean:.10f}\t{r.f1_stderr:.10f}")
        return "\n".join(lines) + "\n"


def _stderr(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values) / math.sqrt(len(values))


def _cell(args) -> dict:
    dataset, test, valid, mode, n, seed, base = args
    aug = augment_for_mode(dataset, mode, n, seed, base)
    res = evaluate(train_classifier(aug, valid, seed=seed), test)
    return {"mode": mode, "n": n, "seed": seed, "accuracy": res.accuracy, "macro_f1": res.macro_f1,
            "n_train": res.n_train}


def sweep_n(
    dataset: Dataset,
    test: Dataset,
    n_values: Sequence[int],
    modes: Sequence[str] = ("boostaug", "monoaug", "raw_backend"),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    base: BoostRunConfig | None = None,
    valid: Dataset | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Accuracy / macro-F1 mean and standard error per (mode, N) over seeds."""
    if not n_values:
        raise ConfigError("n_values must not be empty")
    if not seeds:
        raise ConfigError("need at least one seed")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown sweep mode {m!r}; choose from {MODES}")
    base = base or BoostRunConfig()
    tasks = [(dataset, test, valid, m, n, s, base) for m in modes for n in n_values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell, tasks))
    else:
        cells = [_cell(t) for t in tasks]
    rows = []
    for m in modes:
        for n in n_values:
            group = [c for c in cells if c["mode"] == m and c["n"] == n]
            acc = [c["accuracy"] for c in group]
            f1 = [c["macro_f1"] for c in group]
            rows.append(SweepRow(m, n, statistics.fmean(acc), _stderr(acc), statistics.fmean(f1), _stderr(f1),
                                 len(group)))
    return SweepResult(rows, cells)
