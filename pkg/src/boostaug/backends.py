"""Word-level augmentation backends.

Every transform works on a list of *units*: plain tokens, plus (for ABSC with
aspect protection) the aspect term collapsed into a single protected unit so
no edit can split, move into, or delete it.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import ConfigError, Example, _locate_span
from .tokens import detokenize, token_spans, tokenize

STRATEGIES = ("eda", "spelling", "split", "embed_sub")
EDA_OPS = ("synonym_replace", "random_insert", "random_swap", "random_delete")
MIN_SPLIT_LENGTH = 4


@dataclass(frozen=True)
class TransformConfig:
    strategy: str = "eda"
    token_transform_prob: float = 0.1
    eda_op_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    max_attempts: int = 10
    protect_aspect: bool = True
    synonyms_path: str | None = None
    misspellings_path: str | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown backend {self.strategy!r}; choose from {STRATEGIES}")
        if not 0.0 <= self.token_transform_prob <= 1.0:
            raise ConfigError(f"token_transform_prob must be in [0, 1], got {self.token_transform_prob}")
        w = self.eda_op_weights
        if len(w) != 4 or any(x < 0 for x in w) or sum(w) <= 0:
            raise ConfigError(f"eda_op_weights must be 4 non-negative weights, not all zero: {w}")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


@dataclass(frozen=True)
class AugmentationCandidate:
    text: str
    origin_id: int
    backend: str
    fold_iteration: int = -1
    draw_index: int = 0
    aspect: str | None = None
    aspect_span: tuple[int, int] | None = None
    identity: bool = False
    perplexity: float | None = None
    confidence: tuple[float, ...] | None = None
    predicted_label: str | None = None

    @property
    def scored(self) -> bool:
        return self.perplexity is not None and self.confidence is not None and self.predicted_label is not None

    @property
    def max_confidence(self) -> float:
        return max(self.confidence)


class Proposer(Protocol):
    def propose(self, tokens: Sequence[str], index: int) -> list[tuple[str, float]]: ...


# -- resources -------------------------------------------------------------

def parse_lexicon(lines) -> dict[str, list[str]]:
    lex: dict[str, list[str]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ValueError(f"lexicon line {lineno}: expected 'word<TAB>alt1,alt2,...'")
        word, alts = line.split("\t", 1)
        items = [a.strip() for a in alts.split(",") if a.strip()]
        if items:
            lex.setdefault(word.strip().lower(), []).extend(items)
    return lex


@functools.lru_cache(maxsize=16)
def load_lexicon(path: str | None, default: str) -> dict[str, list[str]]:
    """Load a ``word<TAB>alt1,alt2`` file; ``path=None`` loads the bundled one."""
    if path is None:
        text = resources.files("boostaug").joinpath("resources", default).read_text(encoding="utf-8")
        return parse_lexicon(text.splitlines())
    with open(path, encoding="utf-8") as f:
        return parse_lexicon(f)


def synonyms_for(config: TransformConfig) -> dict[str, list[str]]:
    path = config.synonyms_path or os.environ.get("BOOSTAUG_SYNONYMS")
    return load_lexicon(path, "synonyms.tsv")


def misspellings_for(config: TransformConfig) -> dict[str, list[str]]:
    path = config.misspellings_path or os.environ.get("BOOSTAUG_MISSPELLINGS")
    return load_lexicon(path, "misspellings.tsv")


# -- unit bookkeeping ------------------------------------------------------

@dataclass
class _Units:
    items: list[str]
    protected: list[bool]

    def copy(self) -> "_Units":
        return _Units(list(self.items), list(self.protected))

    def free(self) -> list[int]:
        return [i for i, p in enumerate(self.protected) if not p]


def _units_of(example: Example, config: TransformConfig) -> _Units:
    if example.aspect is not None and config.protect_aspect:
        start, end = example.aspect_span
        spans = token_spans(example.text)
        toks = [example.text[a:b] for a, b in spans]
        items = toks[:start] + [example.aspect] + toks[end:]
        protected = [False] * start + [True] + [False] * (len(toks) - end)
        return _Units(items, protected)
    toks = tokenize(example.text)
    return _Units(toks, [False] * len(toks))


def _select(units: _Units, prob: float, rng: np.random.Generator) -> list[int]:
    draws = rng.random(len(units.items))
    return [i for i in units.free() if draws[i] < prob]


def _finish(example: Example, original: _Units, units: _Units, backend: str) -> AugmentationCandidate:
    identity = units.items == original.items
    text = detokenize(units.items)
    aspect = span = None
    if example.aspect is not None:
        if True in units.protected:
            pos = units.protected.index(True)
            lo = len(detokenize(units.items[:pos])) + (1 if pos else 0)
            span = _locate_span(text, lo, lo + len(example.aspect))
        else:
            span = _find_aspect(text, example.aspect)
        aspect = example.aspect if span is not None else None
    return AugmentationCandidate(
        text=text, origin_id=example.id, backend=backend,
        aspect=aspect, aspect_span=span, identity=identity,
    )


def _find_aspect(text: str, aspect: str) -> tuple[int, int] | None:
    start = text.find(aspect)
    while start != -1:
        span = _locate_span(text, start, start + len(aspect))
        if span is not None:
            return span
        start = text.find(aspect, start + 1)
    return None


# -- transforms ------------------------------------------------------------

def eda_transform(
    example: Example,
    config: TransformConfig,
    rng: np.random.Generator,
    lexicon: dict[str, list[str]] | None = None,
) -> AugmentationCandidate:
    lex = synonyms_for(config) if lexicon is None else lexicon
    original = _units_of(example, config)
    units = original.copy()
    selected = _select(units, config.token_transform_prob, rng)
    w = np.asarray(config.eda_op_weights, dtype=float)
    op = EDA_OPS[int(rng.choice(4, p=w / w.sum()))]

    if op == "synonym_replace":
        for i in selected:
            syns = lex.get(units.items[i].lower())
            if syns:
                units.items[i] = syns[int(rng.integers(len(syns)))]
    elif op == "random_insert":
        inserts = []
        for i in selected:
            syns = lex.get(units.items[i].lower())
            if syns:
                inserts.append(syns[int(rng.integers(len(syns)))])
        for word in inserts:
            pos = int(rng.integers(len(units.items) + 1))
            units.items.insert(pos, word)
            units.protected.insert(pos, False)
    elif op == "random_swap":
        free = units.free()
        if len(free) >= 2:
            for i in selected:
                others = [f for f in free if f != i]
                j = others[int(rng.integers(len(others)))]
                units.items[i], units.items[j] = units.items[j], units.items[i]
    else:
        drop = set(selected)
        if drop and len(drop) == len(units.items):
            drop.discard(selected[int(rng.integers(len(selected)))])
        units = _Units(
            [t for i, t in enumerate(units.items) if i not in drop],
            [p for i, p in enumerate(units.protected) if i not in drop],
        )
    return _finish(example, original, units, "eda")


def spelling_transform(
    example: Example,
    config: TransformConfig,
    rng: np.random.Generator,
    dictionary: dict[str, list[str]] | None = None,
) -> AugmentationCandidate:
    table = misspellings_for(config) if dictionary is None else dictionary
    original = _units_of(example, config)
    units = original.copy()
    for i in _select(units, config.token_transform_prob, rng):
        alts = table.get(units.items[i].lower())
        if alts:
            units.items[i] = alts[int(rng.integers(len(alts)))]
    return _finish(example, original, units, "spelling")


def split_token(token: str, at: int) -> tuple[str, str]:
    if len(token) < MIN_SPLIT_LENGTH or not 0 < at < len(token):
        raise ValueError(f"cannot split {token!r} at {at}")
    return token[:at], token[at:]


def split_transform(
    example: Example,
    config: TransformConfig,
    rng: np.random.Generator,
) -> AugmentationCandidate:
    original = _units_of(example, config)
    units = original.copy()
    items, protected = [], []
    selected = set(_select(units, config.token_transform_prob, rng))
    for i, (tok, prot) in enumerate(zip(units.items, units.protected)):
        if i in selected and len(tok) >= MIN_SPLIT_LENGTH:
            a, b = split_token(tok, int(rng.integers(1, len(tok))))
            items += [a, b]
            protected += [False, False]
        else:
            items.append(tok)
            protected.append(prot)
    return _finish(example, original, _Units(items, protected), "split")


def embed_substitute_transform(
    example: Example,
    config: TransformConfig,
    scorer: Proposer | None,
    rng: np.random.Generator,
) -> AugmentationCandidate:
    original = _units_of(example, config)
    units = original.copy()
    for i in _select(units, config.token_transform_prob, rng):
        proposals = scorer.propose(units.items, i) if scorer is not None else []
        proposals = [(t, w) for t, w in proposals if w > 0 and t != units.items[i]]
        if not proposals:
            continue
        if len(proposals) == 1:
            units.items[i] = proposals[0][0]
            continue
        weights = np.array([w for _, w in proposals], dtype=float)
        units.items[i] = proposals[int(rng.choice(len(proposals), p=weights / weights.sum()))][0]
    return _finish(example, original, units, "embed_sub")


def transform(example: Example, config: TransformConfig, rng: np.random.Generator, scorer=None):
    if config.strategy == "eda":
        return eda_transform(example, config, rng)
    if config.strategy == "spelling":
        return spelling_transform(example, config, rng)
    if config.strategy == "split":
        return split_transform(example, config, rng)
    return embed_substitute_transform(example, config, scorer, rng)


def example_rng(seed: int, example_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, example_id]))


def generate(
    example: Example,
    count: int,
    config: TransformConfig,
    scorer: Proposer | None = None,
    seed: int = 0,
) -> list[AugmentationCandidate]:
    """Draw up to ``count`` distinct, non-identity candidates for ``example``.

    At most ``config.max_attempts * count`` draws are made; identity results,
    repeats, and ABSC candidates that lost their aspect are dropped.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    rng = example_rng(seed, example.id)
    seen = {detokenize(_units_of(example, config).items)}
    out: list[AugmentationCandidate] = []
    for attempt in range(config.max_attempts * count):
        cand = transform(example, config, rng, scorer)
        if cand.identity or cand.text in seen or not cand.text.strip():
            continue
        if example.aspect is not None and cand.aspect is None:
            continue
        seen.add(cand.text)
        out.append(replace(cand, draw_index=attempt))
        if len(out) == count:
            break
    return out


def candidate_to_record(cand: AugmentationCandidate, label: str) -> tuple:
    return (cand.text, label, cand.aspect, cand.aspect_span)
