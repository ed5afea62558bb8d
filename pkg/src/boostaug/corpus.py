"""Dataset model, file I/O and k-fold planning.

Two on-disk formats are supported:

* TC: one record per line, ``label<TAB>text``.
* ABSC: three-line records (sentence with a ``$T$`` placeholder, aspect term,
  polarity token).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tokens import token_spans

PLACEHOLDER = "$T$"
TASKS = ("tc", "absc")


class CorpusError(ValueError):
    """Malformed dataset input or invalid dataset construction."""


class ConfigError(ValueError):
    """Invalid configuration value (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class Example:
    id: int
    text: str
    label: str
    aspect: str | None = None
    aspect_span: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"example {self.id}: empty text")
        if self.aspect is not None:
            if self.aspect_span is None:
                raise CorpusError(f"example {self.id}: aspect without span")
            if aspect_char_range(self.text, self.aspect, self.aspect_span) is None:
                raise CorpusError(
                    f"example {self.id}: aspect {self.aspect!r} not found at tokens {self.aspect_span}"
                )


def aspect_char_range(text: str, aspect: str, span: tuple[int, int]) -> tuple[int, int] | None:
    """Character range of the aspect tokens, or None if they don't spell ``aspect``."""
    start, end = span
    spans = token_spans(text)
    if not (0 <= start < end <= len(spans)):
        return None
    lo, hi = spans[start][0], spans[end - 1][1]
    if text[lo:hi] != aspect:
        return None
    return lo, hi


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    labels: tuple[str, ...]
    task: str = "tc"

    def __post_init__(self):
        if self.task not in TASKS:
            raise CorpusError(f"unknown task {self.task!r}")
        if len(self.labels) != len(set(self.labels)):
            raise CorpusError("duplicate labels in label set")
        known = set(self.labels)
        for i, ex in enumerate(self.examples):
            if ex.id != i:
                raise CorpusError(f"example ids must be dense 0..N-1, got {ex.id} at position {i}")
            if ex.label not in known:
                raise CorpusError(f"example {ex.id}: label {ex.label!r} not in label set")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def texts(self) -> list[str]:
        return [ex.text for ex in self.examples]

    def label_index(self, label: str) -> int:
        return self.labels.index(label)

    def subset(self, ids: Iterable[int]) -> "Dataset":
        """Examples with the given ids, renumbered densely. Keeps the full label set."""
        picked = [self.examples[i] for i in ids]
        return from_records(
            [(ex.text, ex.label, ex.aspect, ex.aspect_span) for ex in picked],
            labels=self.labels,
            task=self.task,
            require_two_labels=False,
        )


def from_records(
    records: Sequence[tuple],
    labels: Sequence[str] | None = None,
    task: str = "tc",
    require_two_labels: bool = True,
) -> Dataset:
    """Build a Dataset from ``(text, label[, aspect, aspect_span])`` tuples.

    Labels default to first-appearance order.
    """
    examples = []
    seen: list[str] = []
    for i, rec in enumerate(records):
        text, label = rec[0], rec[1]
        aspect = rec[2] if len(rec) > 2 else None
        span = tuple(rec[3]) if len(rec) > 3 and rec[3] is not None else None
        examples.append(Example(i, text, label, aspect, span))
        if label not in seen:
            seen.append(label)
    label_set = tuple(labels) if labels is not None else tuple(seen)
    if require_two_labels and len(label_set) < 2:
        raise CorpusError(f"need at least 2 labels, got {list(label_set)}")
    return Dataset(tuple(examples), label_set, task)


def load_tc_dataset(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: expected 'label<TAB>text'")
            label, text = line.split("\t", 1)
            if not label.strip():
                raise CorpusError(f"{path}:{lineno}: empty label")
            if not text.strip():
                raise CorpusError(f"{path}:{lineno}: empty text")
            records.append((text, label))
    if not records:
        raise CorpusError(f"{path}: no records")
    return from_records(records, task="tc", require_two_labels=False)


def load_absc_dataset(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in f]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise CorpusError(f"{path}: no records")
    if len(lines) % 3:
        raise CorpusError(f"{path}: {len(lines)} lines is not a multiple of 3")
    records = []
    for r in range(0, len(lines), 3):
        sentence, aspect, label = lines[r], lines[r + 1].strip(), lines[r + 2].strip()
        lineno = r + 1
        if sentence.count(PLACEHOLDER) != 1:
            raise CorpusError(f"{path}:{lineno}: sentence must contain exactly one {PLACEHOLDER}")
        if not aspect or not label:
            raise CorpusError(f"{path}:{lineno}: empty aspect or label")
        prefix, suffix = sentence.split(PLACEHOLDER)
        text = prefix + aspect + suffix
        span = _locate_span(text, len(prefix), len(prefix) + len(aspect))
        if span is None:
            raise CorpusError(f"{path}:{lineno}: aspect {aspect!r} does not align with token boundaries")
        records.append((text, label, aspect, span))
    return from_records(records, task="absc", require_two_labels=False)


def _locate_span(text: str, lo: int, hi: int) -> tuple[int, int] | None:
    spans = token_spans(text)
    starts = [i for i, (s, _) in enumerate(spans) if s == lo]
    ends = [i for i, (_, e) in enumerate(spans) if e == hi]
    if not starts or not ends or ends[0] < starts[0]:
        return None
    return starts[0], ends[0] + 1


def load_dataset(path: str | os.PathLike, task: str = "tc") -> Dataset:
    if task == "tc":
        return load_tc_dataset(path)
    if task == "absc":
        return load_absc_dataset(path)
    raise ConfigError(f"unknown task {task!r}")


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    path = Path(path)
    out = []
    for ex in dataset.examples:
        if dataset.task == "tc":
            if "\t" in ex.label or "\n" in ex.text or "\t" in ex.text:
                raise CorpusError(f"example {ex.id}: label/text not representable in TC format")
            out.append(f"{ex.label}\t{ex.text}\n")
        else:
            lo, hi = aspect_char_range(ex.text, ex.aspect, ex.aspect_span)
            out.append(f"{ex.text[:lo]}{PLACEHOLDER}{ex.text[hi:]}\n{ex.aspect}\n{ex.label}\n")
    try:
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.writelines(out)
    except OSError as e:
        raise OSError(f"cannot write dataset to {path}: {e}") from e


@dataclass(frozen=True)
class FoldIteration:
    boost_fold: int
    valid_fold: int
    train_folds: tuple[int, ...]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: tuple[int, ...]
    iterations: tuple[FoldIteration, ...]
    seed: int

    def fold_ids(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def fold_sizes(self) -> list[int]:
        return [self.assignment.count(f) for f in range(self.k)]

    def train_ids(self, iteration: int) -> list[int]:
        folds = set(self.iterations[iteration].train_folds)
        return [i for i, f in enumerate(self.assignment) if f in folds]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "fold_sizes": self.fold_sizes(),
            "iterations": [
                {"boost_fold": it.boost_fold, "valid_fold": it.valid_fold, "train_folds": list(it.train_folds)}
                for it in self.iterations
            ],
        }


def make_fold_plan(dataset: Dataset | int, k: int, seed: int) -> FoldPlan:
    """Shuffle ids with ``seed`` and deal them round-robin into ``k`` folds.

    Iteration ``i`` boosts fold ``i``; its validation fold is a seeded draw
    from the remaining folds and the other ``k - 2`` folds train the surrogate.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    if k <= 3:
        raise ConfigError(f"k must be > 3, got {k}")
    if n < k:
        raise CorpusError(f"need at least k={k} examples, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    order = rng.permutation(n)
    assignment = [0] * n
    for pos, idx in enumerate(order):
        assignment[int(idx)] = pos % k
    iterations = []
    for i in range(k):
        others = [f for f in range(k) if f != i]
        valid = others[int(rng.integers(len(others)))]
        iterations.append(FoldIteration(i, valid, tuple(f for f in others if f != valid)))
    return FoldPlan(k, tuple(assignment), tuple(iterations), seed)
