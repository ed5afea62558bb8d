"""Desk-scale experiments on the synthetic sentiment corpus.

Both experiments use one corpus recipe and one filter calibration for the
lightweight scorer:

* relative perplexity cutoff at 2x the training-fold median, because the
  n-gram scorer's perplexities live on a different scale than a transformer's;
* confidence threshold 0.9 instead of 0.99, because naive-Bayes posteriors on
  a small corpus rarely clear 0.99 and the stricter value leaves most
  examples with no survivors at all (88 of 150 on corpus seed 0, against 17
  at 0.9), so augmentation piles up on the easy examples.

The backend is synonym replacement at token probability 0.3 over a lexicon in
which half of each polarity keyword's alternatives carry the opposite
polarity, so the raw backend produces a steady stream of label-breaking edits.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backends import TransformConfig
from .boost import BoostRunConfig, boost_augment, matched_unfiltered
from .evalharness import SweepResult, sweep_n
from .filters import FilterConfig
from .shiftmetrics import NgramFeaturizer, embed_clouds, overlap_rate
from .synthetic import SyntheticSpec, make_splits, noisy_lexicon, write_lexicon

DESK_SPEC = SyntheticSpec(n=150, keywords_per_sentence=1, keyword_zipf=1.0)
DESK_TEST_SIZE = 600
DESK_FILTERS = FilterConfig(perplexity_mode="relative", relative_ratio=2.0, confidence_threshold=0.9)


def desk_config(lexicon_path: str | Path, seed: int = 0, filters: FilterConfig = DESK_FILTERS) -> BoostRunConfig:
    transform = TransformConfig(token_transform_prob=0.3, eda_op_weights=(1.0, 0.0, 0.0, 0.0),
                                synonyms_path=str(lexicon_path))
    return BoostRunConfig(k=5, seed=seed, transform=transform, filters=filters)


def _lexicon(workdir: str | Path, flip_share: float, novel_fillers: bool) -> Path:
    path = Path(workdir) / f"lexicon_flip{flip_share}_{'novel' if novel_fillers else 'corpus'}.tsv"
    write_lexicon(noisy_lexicon(flip_share, novel_fillers), path)
    return path


@dataclass
class ShiftOutcome:
    filtered: list[float] = field(default_factory=list)
    unfiltered: list[float] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)

    @property
    def mean_filtered(self) -> float:
        return statistics.fmean(self.filtered)

    @property
    def mean_unfiltered(self) -> float:
        return statistics.fmean(self.unfiltered)


def shift_experiment(
    workdir: str | Path,
    corpus_seed: int = 0,
    seeds: Sequence[int] = range(5),
    filters: FilterConfig = DESK_FILTERS,
    novel_fillers: bool = True,
    flip_share: float = 0.5,
) -> ShiftOutcome:
    """Hull overlap with the test set: filtered survivors vs. size-matched raw candidates.

    The lexicon sends filler words to out-of-corpus synonyms, the kind of
    drift the perplexity stage is meant to catch. The unfiltered baseline
    takes, per example, as many candidates from the same pool (in draw order)
    as survived filtering, so the two clouds differ only in how candidates were
    picked and not in how many there are; hull area grows with sample size.
    """
    lexicon = _lexicon(workdir, flip_share, novel_fillers)
    train, test = make_splits(DESK_SPEC, DESK_TEST_SIZE, seed=corpus_seed)
    out = ShiftOutcome()
    for s in seeds:
        run = boost_augment(train, desk_config(lexicon, s, filters))
        filtered = [p.text for p in run.survivors]
        raw = [p.text for p in matched_unfiltered(run)]
        texts = {"augmented": filtered, "train": raw, "test": list(test.texts)}
        featurizer = NgramFeaturizer().fit([t for v in texts.values() for t in v])
        clouds = embed_clouds(texts, featurizer, "deterministic", s)
        out.filtered.append(overlap_rate(clouds["augmented"], clouds["test"]))
        out.unfiltered.append(overlap_rate(clouds["train"], clouds["test"]))
        out.sizes.append(len(filtered))
    return out


def sweep_experiment(
    workdir: str | Path,
    corpus_seed: int = 0,
    n_values: Sequence[int] = (2, 8),
    seeds: Sequence[int] = range(5),
    modes: Sequence[str] = ("boostaug", "raw_backend"),
    filters: FilterConfig = DESK_FILTERS,
    flip_share: float = 0.5,
    jobs: int = 1,
) -> SweepResult:
    """Macro-F1 against candidates per example for filtered and raw augmentation."""
    lexicon = _lexicon(workdir, flip_share, novel_fillers=False)
    train, test = make_splits(DESK_SPEC, DESK_TEST_SIZE, seed=corpus_seed)
    return sweep_n(train, test, list(n_values), modes=modes, seeds=list(seeds),
                   base=desk_config(lexicon, 0, filters), jobs=jobs)
