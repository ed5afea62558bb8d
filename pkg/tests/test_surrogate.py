import json
import math
import sys
import threading

import pytest
from hypothesis import given, settings, strategies as st

from boostaug.corpus import ConfigError, from_records
from boostaug.scorer_server import MALFORMATIONS, make_http_server, ScriptedScorer
from boostaug.surrogate import (
    CONFIDENCE_SUM_TOL,
    NgramLM,
    ScorerError,
    ScoreTriple,
    SurrogateTrainConfig,
    argmax_label,
    confidence,
    connect_external_scorer,
    normalize_tokens,
    pseudo_perplexity,
    train_lightweight,
    validate_response,
)

SERVER = f"exec:{sys.executable} -m boostaug.scorer_server"
TRIPLE = {"perplexity": 2.5, "confidence": [0.25, 0.75], "label": "neg"}


def nb_oracle(docs, labels, text, alpha=1.0):
    """Multinomial NB posterior written out from counts; OOV words skipped."""
    vocab = {w for d, _ in docs for w in d.lower().split()}
    post = []
    for lab in labels:
        mine = [d.lower().split() for d, y in docs if y == lab]
        prior = len(mine) / len(docs)
        total = sum(len(t) for t in mine)
        logp = math.log(prior)
        for w in text.lower().split():
            if w in vocab:
                c = sum(t.count(w) for t in mine)
                logp += math.log((c + alpha) / (total + alpha * len(vocab)))
        post.append(logp)
    m = max(post)
    z = sum(math.exp(p - m) for p in post)
    return [math.exp(p - m) / z for p in post]


class TestClassifier:
    def test_hand_computed_posterior(self, separable):
        model = train_lightweight(separable, None)
        conf = confidence(model, "good good")
        assert conf[0] == pytest.approx(121 / 122, abs=1e-12)
        assert conf[1] == pytest.approx(1 / 122, abs=1e-12)

    def test_matches_oracle_on_mixed_corpus(self, tiny_reviews):
        model = train_lightweight(tiny_reviews, None)
        docs = [(ex.text, ex.label) for ex in tiny_reviews]
        for text in ["good food", "awful awful staff", "the cake , the bed", "unknown words only",
                     "great prices but dirty rude staff"]:
            want = nb_oracle(docs, tiny_reviews.labels, " ".join(normalize_tokens(text)))
            assert confidence(model, text) == pytest.approx(want, abs=1e-9)

    def test_twenty_example_oracle(self, separable):
        recs = [(ex.text, ex.label) for ex in separable]
        model = train_lightweight(separable, None)
        for text in ["good", "bad", "good bad", "bad bad good", "zzz"]:
            assert confidence(model, text) == pytest.approx(nb_oracle(recs, ("pos", "neg"), text), abs=1e-9)

    def test_symmetric_evidence_gives_uniform(self, separable):
        assert confidence(train_lightweight(separable, None), "good bad") == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_separable_confident(self, separable):
        assert confidence(train_lightweight(separable, None), "good")[0] > 0.9

    def test_separable_valid_accuracy(self, separable):
        model = train_lightweight(separable, separable)
        assert model.provenance["valid_metric"] == 1.0

    def test_empty_valid_falls_back_to_default(self, tiny_reviews):
        model = train_lightweight(tiny_reviews, tiny_reviews.subset([]))
        assert model.provenance["selected"] == {"ngram_order": 2, "smoothing_alpha": 1.0}
        assert model.provenance["valid_metric"] is None

    def test_missing_label(self):
        d = from_records([("good", "pos"), ("fine", "pos")], labels=("pos", "neg"))
        with pytest.raises(ConfigError, match="neg"):
            train_lightweight(d, None)

    def test_deterministic(self, tiny_reviews):
        a = train_lightweight(tiny_reviews, tiny_reviews.subset(range(0, 10, 3)))
        b = train_lightweight(tiny_reviews, tiny_reviews.subset(range(0, 10, 3)))
        assert a.score("good bad coffee") == b.score("good bad coffee")
        assert a.provenance == b.provenance

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from("the food was good bad great awful coffee xyz , .".split()), min_size=1, max_size=12))
    def test_probability_vector(self, toks):
        model = _TINY_MODEL
        t = model.score(" ".join(toks))
        assert abs(math.fsum(t.confidence) - 1) <= 1e-9
        assert t.predicted_label == argmax_label(t.confidence, model.labels)
        assert t.perplexity >= 1.0


class TestPerplexity:
    def test_uniform_model_equals_vocabulary_size(self):
        words = ["w%d" % i for i in range(23)]
        lm = NgramLM(order=2, alpha=1.0, vocabulary=words)
        V = lm.vocab_size
        assert V == 25  # words + <unk> + </s>
        for text in (["w1"], ["w3", "w4", "w5", "w1"], ["never", "seen"]):
            assert lm.perplexity(text) == pytest.approx(V, rel=1e-9)

    def test_hand_computed_bigram(self, separable):
        model = train_lightweight(separable, None, SurrogateTrainConfig(grid_search=False))
        # V = {good, bad, <unk>, </s>}; p(good | <s>) = (10 + 1) / (20 + 4)
        assert pseudo_perplexity(model, "good") == pytest.approx(24 / 11, rel=1e-12)

    def test_oov_strictly_increases(self, separable, tiny_reviews):
        for data, text in ((separable, "good"), (tiny_reviews, "the food was good")):
            model = train_lightweight(data, None)
            toks = text.split()
            for pos in range(len(toks) + 1):
                noisy = " ".join(toks[:pos] + ["qwertyuiop"] + toks[pos:])
                assert pseudo_perplexity(model, noisy) > pseudo_perplexity(model, text)

    def test_reads_only_text(self, separable):
        flipped = from_records([(ex.text, "neg" if ex.label == "pos" else "pos") for ex in separable])
        a, b = train_lightweight(separable, None), train_lightweight(flipped, None)
        assert pseudo_perplexity(a, "good bad") == pseudo_perplexity(b, "good bad")

    def test_empty_text(self, separable):
        with pytest.raises(ValueError):
            pseudo_perplexity(train_lightweight(separable, None), " ")


_TINY_MODEL = train_lightweight(
    from_records([("the food was good", "pos"), ("great coffee", "pos"), ("the food was bad", "neg"),
                  ("awful coffee", "neg")]), None)


class TestValidateResponse:
    LABELS = ("pos", "neg")

    def ok(self, **kw):
        return json.dumps({"id": 4, "perplexity": 3.0, "confidence": [0.9, 0.1], "label": "pos", **kw})

    def test_valid(self):
        assert validate_response(self.ok(), 4, self.LABELS) == ScoreTriple(3.0, (0.9, 0.1), "pos")

    @pytest.mark.parametrize("raw, msg", [
        ("not json", "not JSON"),
        ('{"id": 4, "confidence": [0.9, 0.1], "label": "pos"}', "missing field 'perplexity'"),
        ('{"id": 4, "error": "boom"}', "boom"),
        ("[1, 2]", "not an object"),
    ])
    def test_rejects_shape(self, raw, msg):
        with pytest.raises(ScorerError, match=msg) as err:
            validate_response(raw, 4, self.LABELS)
        assert err.value.raw == raw

    @pytest.mark.parametrize("kw, msg", [
        (dict(id=5), "id"),
        (dict(perplexity=0.99), "perplexity"),
        (dict(perplexity=float("inf")), "perplexity"),
        (dict(perplexity="3"), "perplexity"),
        (dict(confidence=[0.5, 0.3]), "probability vector"),
        (dict(confidence=[1.2, -0.2]), "probability vector"),
        (dict(confidence=[1.0]), "2 numbers"),
        (dict(label="neutral"), "unknown label"),
        (dict(label="neg"), "argmax"),
    ])
    def test_rejects_invariants(self, kw, msg):
        with pytest.raises(ScorerError, match=msg):
            validate_response(self.ok(**kw), 4, self.LABELS)

    def test_sum_tolerance(self):
        validate_response(self.ok(confidence=[0.9 + 0.5e-9, 0.1]), 4, self.LABELS)
        with pytest.raises(ScorerError):
            validate_response(self.ok(confidence=[0.9 + 3 * CONFIDENCE_SUM_TOL, 0.1]), 4, self.LABELS)


class TestExternalScorer:
    LABELS = ("pos", "neg")

    def test_echo_fixed_triple(self):
        with connect_external_scorer(f"{SERVER} --default '{json.dumps(TRIPLE)}'", self.LABELS) as s:
            for text in ("one", "two", "three"):
                assert s.score(text) == ScoreTriple(2.5, (0.25, 0.75), "neg")

    def test_scripted(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"hello": TRIPLE}), encoding="utf-8")
        with connect_external_scorer(f"{SERVER} --script {p}", self.LABELS) as s:
            assert s.score("hello").predicted_label == "neg"
            with pytest.raises(ScorerError, match="unscripted"):
                s.score("other")

    @pytest.mark.parametrize("kind", [k for k in MALFORMATIONS if k != "silent"])
    def test_malformed_rejected(self, kind):
        spec = f"{SERVER} --default '{json.dumps(TRIPLE)}' --malform {kind}"
        with connect_external_scorer(spec, self.LABELS) as s:
            with pytest.raises(ScorerError) as err:
                s.score("x")
        assert err.value.raw is not None

    def test_sum_of_point_eight_rejected(self):
        spec = f"{SERVER} --default '{json.dumps(TRIPLE)}' --malform bad_sum"
        with connect_external_scorer(spec, self.LABELS) as s:
            with pytest.raises(ScorerError, match="probability vector") as err:
                s.score("x")
        assert json.loads(err.value.raw)["confidence"] == [0.2, 0.6000000000000001]

    def test_timeout(self):
        spec = f"{SERVER} --default '{json.dumps(TRIPLE)}' --malform silent"
        with connect_external_scorer(spec, self.LABELS, timeout=0.5) as s:
            with pytest.raises(ScorerError, match="timed out"):
                s.score("x")

    def test_process_exits(self):
        with connect_external_scorer(f"exec:{sys.executable} -c pass", self.LABELS, timeout=5) as s:
            with pytest.raises(ScorerError):
                s.score("x")

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            connect_external_scorer("grpc://host", self.LABELS)

    def test_http(self):
        server = make_http_server(ScriptedScorer({}, TRIPLE))
        t = threading.Thread(target=server.serve_forever, daemon=True)
        t.start()
        try:
            url = f"http://127.0.0.1:{server.server_address[1]}/"
            s = connect_external_scorer(url, self.LABELS)
            assert s.score("a") == s.score("b") == ScoreTriple(2.5, (0.25, 0.75), "neg")
            s2 = connect_external_scorer("http:" + url, self.LABELS)
            assert s2.score("c").perplexity == 2.5
        finally:
            server.shutdown()
            server.server_close()

    def test_http_malformed(self):
        server = make_http_server(ScriptedScorer({}, TRIPLE, malform="unknown_label"))
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            s = connect_external_scorer(f"http://127.0.0.1:{server.server_address[1]}/", self.LABELS)
            with pytest.raises(ScorerError, match="unknown label"):
                s.score("a")
        finally:
            server.shutdown()
            server.server_close()
