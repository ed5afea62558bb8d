"""Synthetic two-class sentiment corpus with planted polarity keywords.

Sentences are neutral filler words plus one or more polarity keywords of the
example's class. Keyword frequencies follow a Zipf law so some keywords are
rare in training data; the accompanying lexicons map keywords either to
same-polarity alternatives (label preserving) or to opposite-polarity ones
(label breaking).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, from_records

POSITIVE = ("good", "great", "excellent", "wonderful", "superb", "fantastic",
            "lovely", "brilliant", "terrific", "splendid", "stellar", "delightful")
NEGATIVE = ("bad", "awful", "terrible", "horrible", "poor", "dreadful",
            "lousy", "abysmal", "dismal", "atrocious", "shoddy", "mediocre")
FILLER = ("the", "a", "movie", "film", "plot", "story", "acting", "cast", "scene", "music",
          "was", "is", "really", "quite", "very", "overall", "and", "with", "of", "to",
          "director", "camera", "ending", "script", "score", "dialogue", "pacing", "visuals",
          "sound", "editing", "this", "that", "it", "in", "for", "at", "time", "show",
          "episode", "season", "characters", "performance", "effects", "moments", "scenes",
          "lead", "actor", "actress", "writing", "premise", "setting", "tone", "style", "theme",
          "runtime", "sequel", "version", "studio", "budget", "audience")
LABELS = ("pos", "neg")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 500
    min_fillers: int = 6
    max_fillers: int = 12
    keywords_per_sentence: int = 2
    min_keywords: int | None = None
    keyword_zipf: float = 1.2
    n_keywords: int = 12
    filler_zipf: float = 1.0
    confusion: float = 0.0


def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def make_corpus(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    """Balanced corpus; ``confusion`` is the chance of one extra opposite-polarity keyword."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E17]))
    kw_p = _zipf_weights(spec.n_keywords, spec.keyword_zipf)
    fill_p = _zipf_weights(len(FILLER), spec.filler_zipf)
    records = []
    for i in range(spec.n):
        label = LABELS[i % 2]
        own, other = (POSITIVE, NEGATIVE) if label == "pos" else (NEGATIVE, POSITIVE)
        own, other = own[:spec.n_keywords], other[:spec.n_keywords]
        words = [FILLER[j] for j in rng.choice(len(FILLER), size=int(rng.integers(spec.min_fillers, spec.max_fillers + 1)), p=fill_p)]
        lo = spec.keywords_per_sentence if spec.min_keywords is None else spec.min_keywords
        n_kw = int(rng.integers(lo, spec.keywords_per_sentence + 1))
        inserts = [own[j] for j in rng.choice(len(own), size=n_kw, p=kw_p)]
        if spec.confusion and rng.random() < spec.confusion:
            inserts.append(other[int(rng.choice(len(other), p=kw_p))])
        for w in inserts:
            words.insert(int(rng.integers(len(words) + 1)), w)
        records.append((" ".join(words), label))
    return from_records(records, labels=LABELS)


def make_splits(spec: SyntheticSpec, n_test: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Train and held-out test sets drawn from the same distribution."""
    full = make_corpus(SyntheticSpec(**{**spec.__dict__, "n": spec.n + n_test}), seed)
    order = np.random.default_rng(np.random.SeedSequence([seed, 0x7E57])).permutation(len(full))
    train_ids, test_ids = sorted(order[n_test:].tolist()), sorted(order[:n_test].tolist())
    return full.subset(train_ids), full.subset(test_ids)


def flip_lexicon(n_keywords: int = len(POSITIVE)) -> dict[str, list[str]]:
    """Every keyword maps only to opposite-polarity keywords."""
    pos, neg = POSITIVE[:n_keywords], NEGATIVE[:n_keywords]
    lex = {w: list(neg) for w in pos}
    lex.update({w: list(pos) for w in neg})
    return lex


def novel_word(word: str, variant: int) -> str:
    """A deterministic word that never occurs in a synthetic corpus."""
    return ("un" + word) if variant % 2 else (word + "ish")


def noisy_lexicon(flip_share: float = 0.5, novel_fillers: bool = False) -> dict[str, list[str]]:
    """Keywords map to same-polarity alternatives, with ``flip_share`` of the
    entries replaced by opposite-polarity words.

    Fillers map to other fillers, or with ``novel_fillers`` to words outside
    the corpus vocabulary, the way a general-purpose thesaurus proposes rare
    words a small corpus never uses.
    """
    lex: dict[str, list[str]] = {}
    for own, other in ((POSITIVE, NEGATIVE), (NEGATIVE, POSITIVE)):
        for i, w in enumerate(own):
            same = [x for x in own if x != w]
            n_flip = int(round(flip_share * len(same)))
            lex[w] = same[n_flip:] + list(other[i:i + n_flip] + other[:max(0, i + n_flip - len(other))])
    for i, w in enumerate(FILLER):
        if novel_fillers:
            lex[w] = [novel_word(w, 0), novel_word(w, 1)]
        else:
            lex[w] = [FILLER[(i + 1) % len(FILLER)], FILLER[(i + 7) % len(FILLER)]]
    return lex


def write_lexicon(lex: dict[str, list[str]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for w in sorted(lex):
            f.write(f"{w}\t{','.join(lex[w])}\n")
