import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from boostaug.backends import AugmentationCandidate
from boostaug.corpus import ConfigError, Example
from boostaug.filters import (
    STAGES,
    FilterConfig,
    apply_confidence_threshold,
    apply_label_constraint,
    apply_perplexity_filter,
    confidence_rank,
    filter_chain,
    run_stages,
    score_candidates,
)
from boostaug.surrogate import ScorerError, ScoreTriple

LABELS = ("pos", "neg")
EXAMPLE = Example(0, "the origin", "pos")


def triple(ppl, p_pos):
    conf = (p_pos, 1.0 - p_pos)
    return ScoreTriple(ppl, conf, "pos" if p_pos >= 0.5 else "neg")


class Scripted:
    def __init__(self, table):
        self.table = table
        self.calls = 0

    def score(self, text, aspect=None):
        self.calls += 1
        if text not in self.table:
            raise ScorerError(f"no score for {text!r}")
        return self.table[text]


def pool(triples):
    cands = [AugmentationCandidate(f"cand {i}", 0, "eda", draw_index=i) for i in range(len(triples))]
    return cands, Scripted({c.text: t for c, t in zip(cands, triples)})


def scored(triples):
    cands, model = pool(triples)
    return score_candidates(cands, model)


def hand_chain(triples, truth, cfg, median=None):
    """Independent composition of the stages over (draw_index, triple) pairs."""
    items = list(enumerate(triples))
    if "label" in cfg.enabled:
        items = [(i, t) for i, t in items if t.predicted_label == truth]
    if "perplexity" in cfg.enabled:
        cut = cfg.perplexity_limit if cfg.perplexity_mode == "absolute" else cfg.relative_ratio * median
        items = [(i, t) for i, t in items if t.perplexity < cut]
    if "confidence_rank" in cfg.enabled:
        items = sorted(items, key=lambda it: (-max(it[1].confidence), it[1].perplexity, it[0]))[:cfg.keep_per_example]
    if "confidence_threshold" in cfg.enabled:
        items = [(i, t) for i, t in items if max(t.confidence) > cfg.confidence_threshold]
    return [i for i, _ in items][:cfg.keep_per_example]


class TestStages:
    def test_label_identity_and_removal(self):
        c = scored([triple(2, 0.9), triple(2, 0.8)])
        assert apply_label_constraint(c, "pos") == c
        # a "greatest" -> "worst" edit the surrogate reads as negative is dropped
        c = scored([triple(2, 0.9), triple(2, 0.1), triple(3, 0.7)])
        assert [x.draw_index for x in apply_label_constraint(c, "pos")] == [0, 2]
        assert apply_label_constraint([], "pos") == []

    def test_label_requires_scores(self):
        with pytest.raises(ScorerError):
            apply_label_constraint([AugmentationCandidate("x", 0, "eda")], "pos")

    def test_perplexity_boundary_dumped(self):
        c = scored([triple(3.0, 0.9), triple(5.0, 0.9), triple(7.2, 0.9)])
        assert [x.perplexity for x in apply_perplexity_filter(c, FilterConfig())] == [3.0]

    def test_infinite_limit_is_identity(self):
        c = scored([triple(1e9, 0.9), triple(1.0, 0.9)])
        assert apply_perplexity_filter(c, FilterConfig(perplexity_limit=math.inf)) == c

    def test_relative_mode(self):
        cfg = FilterConfig(perplexity_mode="relative", relative_ratio=1.5)
        c = scored([triple(149.9, 0.9), triple(150.0, 0.9)])
        assert [x.perplexity for x in apply_perplexity_filter(c, cfg, median=100.0)] == [149.9]
        with pytest.raises(ConfigError):
            apply_perplexity_filter(c, cfg)

    def test_rank_sixteen_to_eight(self):
        confs = [0.5 + 0.03 * i for i in range(16)]
        random.Random(3).shuffle(confs)
        c = scored([triple(2.0, p) for p in confs])
        kept = confidence_rank(c, 8)
        assert sorted(x.max_confidence for x in kept) == sorted(confs)[8:]

    def test_rank_identity_up_to_order(self):
        c = scored([triple(2.0, 0.6), triple(2.0, 0.9)])
        assert sorted(confidence_rank(c, 5), key=lambda x: x.draw_index) == c

    def test_rank_tie_breaks_on_perplexity(self):
        c = scored([triple(3.4, 0.97), triple(2.1, 0.97)])
        assert [x.perplexity for x in confidence_rank(c, 2)] == [2.1, 3.4]

    def test_threshold_boundary(self):
        c = scored([triple(2, 0.995), triple(2, 0.99), triple(2, 0.8)])
        assert [x.max_confidence for x in apply_confidence_threshold(c, FilterConfig())] == [0.995]
        assert apply_confidence_threshold(c, FilterConfig(confidence_threshold=0.0)) == c
        assert apply_confidence_threshold([], FilterConfig()) == []


class TestConfig:
    def test_default_values(self):
        cfg = FilterConfig()
        assert (cfg.confidence_threshold, cfg.perplexity_limit, cfg.keep_per_example) == (0.99, 5.0, 8)
        assert cfg.enabled == frozenset(STAGES)

    @pytest.mark.parametrize("kw", [dict(confidence_threshold=1.1), dict(perplexity_limit=0),
                                    dict(keep_per_example=0), dict(enabled={"grammar"}),
                                    dict(perplexity_mode="median"), dict(relative_ratio=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            FilterConfig(**kw)


class TestChain:
    def test_all_disabled_is_draw_order_truncation(self):
        cands, model = pool([triple(100, 0.1)] * 12)
        out = filter_chain(EXAMPLE, cands, model, FilterConfig(enabled=()))
        assert [c.draw_index for c in out] == list(range(8))

    def test_exactly_three_qualify(self):
        ts = [triple(2.0, 0.999), triple(9.0, 0.999), triple(2.0, 0.2), triple(1.5, 0.995),
              triple(4.9, 0.9999), triple(3.0, 0.98), triple(2.0, 0.99)] + [triple(6.0, 0.6)] * 9
        cands, model = pool(ts)
        out = filter_chain(EXAMPLE, cands, model, FilterConfig())
        assert sorted(c.draw_index for c in out) == [0, 3, 4]
        assert model.calls == len(ts)

    def test_without_confidence_ablation(self):
        cfg = FilterConfig().without("confidence_rank", "confidence_threshold")
        ts = [triple(2.0, 0.6)] * 10
        cands, model = pool(ts)
        assert [c.draw_index for c in filter_chain(EXAMPLE, cands, model, cfg)] == list(range(8))

    def test_scorer_error_names_candidate(self):
        cands, model = pool([triple(2, 0.9)])
        cands.append(AugmentationCandidate("missing", 0, "eda", draw_index=7))
        with pytest.raises(ScorerError, match="candidate 7 of example 0"):
            filter_chain(EXAMPLE, cands, model, FilterConfig())

    def test_removal_counts_conserve(self):
        rnd = random.Random(1)
        ts = [triple(rnd.uniform(1, 8), rnd.random()) for _ in range(16)]
        kept, removed = run_stages(scored(ts), "pos", FilterConfig())
        assert len(kept) + sum(removed.values()) == 16


def random_pool(rnd, n):
    return [triple(round(rnd.uniform(1.0, 9.0), 1), round(rnd.random(), 3)) for _ in range(n)]


def random_config(rnd):
    stages = [s for s in STAGES if rnd.random() < 0.7]
    return FilterConfig(confidence_threshold=rnd.choice([0.0, 0.5, 0.8, 0.9, 0.99]),
                        perplexity_limit=rnd.choice([2.0, 5.0, 8.0, math.inf]),
                        keep_per_example=rnd.randint(1, 10), enabled=stages)


def test_chain_equals_hand_composition_on_200_pools():
    rnd = random.Random(20240)
    for _ in range(200):
        ts = random_pool(rnd, rnd.randint(0, 20))
        cfg = random_config(rnd)
        truth = rnd.choice(LABELS)
        cands, model = pool(ts)
        got = [c.draw_index for c in filter_chain(Example(0, "o", truth), cands, model, cfg)]
        assert got == hand_chain(ts, truth, cfg)
        assert len(got) <= min(len(ts), cfg.keep_per_example)


triples_st = st.lists(st.tuples(st.floats(1.0, 10.0), st.floats(0.0, 1.0)), max_size=20)


@settings(max_examples=150, deadline=None)
@given(triples_st, st.floats(0, 1), st.floats(0, 1), st.floats(1.01, 10), st.floats(1.01, 10),
       st.integers(1, 10), st.sets(st.sampled_from(STAGES)))
def test_relaxing_thresholds_never_shrinks_survivors(raw, t1, t2, p1, p2, keep, stages):
    ts = [triple(p, c) for p, c in raw]
    strict = FilterConfig(confidence_threshold=max(t1, t2), perplexity_limit=min(p1, p2),
                          keep_per_example=keep, enabled=stages)
    loose = FilterConfig(confidence_threshold=min(t1, t2), perplexity_limit=max(p1, p2),
                         keep_per_example=keep, enabled=stages)
    a, _ = run_stages(scored(ts), "pos", strict)
    b, _ = run_stages(scored(ts), "pos", loose)
    assert len(b) >= len(a)
    assert len(a) <= keep and len(b) <= keep


@settings(max_examples=100, deadline=None)
@given(triples_st, st.sets(st.sampled_from(STAGES)))
def test_stages_never_edit_candidates(raw, stages):
    ts = [triple(p, c) for p, c in raw]
    inp = scored(ts)
    out, _ = run_stages(inp, "neg", FilterConfig(enabled=stages))
    assert all(c in inp for c in out)
    if "confidence_rank" not in stages:
        idx = [c.draw_index for c in out]
        assert idx == sorted(idx)
