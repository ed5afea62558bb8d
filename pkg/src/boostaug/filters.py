"""Candidate quality control: label constraint, perplexity filter,
confidence ranking (2N -> N pool) and confidence threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .backends import AugmentationCandidate
from .corpus import ConfigError, Example
from .surrogate import ScorerError

STAGES = ("label", "perplexity", "confidence_rank", "confidence_threshold")


@dataclass(frozen=True)
class FilterConfig:
    confidence_threshold: float = 0.99
    perplexity_limit: float = 5.0
    perplexity_mode: str = "absolute"
    relative_ratio: float = 1.5
    keep_per_example: int = 8
    enabled: frozenset = frozenset(STAGES)

    def __post_init__(self):
        object.__setattr__(self, "enabled", frozenset(self.enabled))
        unknown = self.enabled - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown filter stage(s) {sorted(unknown)}; choose from {STAGES}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError(f"confidence_threshold must be in [0, 1], got {self.confidence_threshold}")
        if not self.perplexity_limit > 0:
            raise ConfigError(f"perplexity_limit must be positive, got {self.perplexity_limit}")
        if self.perplexity_mode not in ("absolute", "relative"):
            raise ConfigError(f"perplexity_mode must be absolute or relative, got {self.perplexity_mode!r}")
        if not self.relative_ratio > 0:
            raise ConfigError(f"relative_ratio must be positive, got {self.relative_ratio}")
        if self.keep_per_example < 1:
            raise ConfigError(f"keep_per_example must be >= 1, got {self.keep_per_example}")

    def without(self, *stages: str) -> "FilterConfig":
        return replace(self, enabled=self.enabled - set(stages))


def _require_scored(cands: Sequence[AugmentationCandidate]):
    for c in cands:
        if not c.scored:
            raise ScorerError(f"candidate {c.text!r} (origin {c.origin_id}) has not been scored")


def apply_label_constraint(cands: Sequence[AugmentationCandidate], truth: str) -> list[AugmentationCandidate]:
    _require_scored(cands)
    return [c for c in cands if c.predicted_label == truth]


def perplexity_cutoff(config: FilterConfig, median: float | None = None) -> float:
    if config.perplexity_mode == "absolute":
        return config.perplexity_limit
    if median is None:
        raise ConfigError("relative perplexity mode needs the training-fold median perplexity")
    return config.relative_ratio * median


def apply_perplexity_filter(
    cands: Sequence[AugmentationCandidate],
    config: FilterConfig,
    median: float | None = None,
) -> list[AugmentationCandidate]:
    """Keep candidates strictly below the cutoff; reaching it dumps the candidate."""
    _require_scored(cands)
    cutoff = perplexity_cutoff(config, median)
    return [c for c in cands if c.perplexity < cutoff]


def confidence_rank(cands: Sequence[AugmentationCandidate], keep: int) -> list[AugmentationCandidate]:
    _require_scored(cands)
    ranked = sorted(
        enumerate(cands), key=lambda ic: (-ic[1].max_confidence, ic[1].perplexity, ic[1].draw_index, ic[0])
    )
    return [c for _, c in ranked[:keep]]


def apply_confidence_threshold(cands: Sequence[AugmentationCandidate], config: FilterConfig) -> list[AugmentationCandidate]:
    _require_scored(cands)
    return [c for c in cands if c.max_confidence > config.confidence_threshold]


def score_candidates(cands: Sequence[AugmentationCandidate], model) -> list[AugmentationCandidate]:
    """Score each candidate once, attaching perplexity, confidence and label."""
    out = []
    for c in cands:
        try:
            t = model.score(c.text, c.aspect)
        except ScorerError as e:
            raise ScorerError(f"scoring candidate {c.draw_index} of example {c.origin_id} failed: {e}", e.raw) from e
        out.append(replace(c, perplexity=t.perplexity, confidence=t.confidence, predicted_label=t.predicted_label))
    return out


def run_stages(
    scored: Sequence[AugmentationCandidate],
    truth: str,
    config: FilterConfig,
    median: float | None = None,
) -> tuple[list[AugmentationCandidate], dict[str, int]]:
    """Apply the enabled stages in chain order; returns survivors and per-stage removal counts.

    With ranking disabled the result is still truncated to ``keep_per_example``
    in draw order, which is counted against the ``truncate`` key.
    """
    removed = {"label": 0, "perplexity": 0, "confidence_rank": 0, "confidence_threshold": 0, "truncate": 0}
    cur = list(scored)
    if "label" in config.enabled:
        nxt = apply_label_constraint(cur, truth)
        removed["label"], cur = len(cur) - len(nxt), nxt
    if "perplexity" in config.enabled:
        nxt = apply_perplexity_filter(cur, config, median)
        removed["perplexity"], cur = len(cur) - len(nxt), nxt
    if "confidence_rank" in config.enabled:
        nxt = confidence_rank(cur, config.keep_per_example)
        removed["confidence_rank"], cur = len(cur) - len(nxt), nxt
    if "confidence_threshold" in config.enabled:
        nxt = apply_confidence_threshold(cur, config)
        removed["confidence_threshold"], cur = len(cur) - len(nxt), nxt
    if len(cur) > config.keep_per_example:
        removed["truncate"] = len(cur) - config.keep_per_example
        cur = cur[: config.keep_per_example]
    return cur, removed


def filter_chain(
    example: Example,
    raw_cands: Sequence[AugmentationCandidate],
    model,
    config: FilterConfig,
    median: float | None = None,
) -> list[AugmentationCandidate]:
    scored = score_candidates(raw_cands, model)
    survivors, _ = run_stages(scored, example.label, config, median)
    return survivors
