import math
import statistics

import pytest

from boostaug.backends import TransformConfig
from boostaug.boost import BoostRunConfig
from boostaug.corpus import ConfigError, from_records
from boostaug.evalharness import EvalResult, evaluate, sweep_n, train_classifier
from boostaug.filters import FilterConfig
from boostaug.metrics import accuracy, macro_f1, per_class_f1
from boostaug.synthetic import SyntheticSpec, make_splits


class Stub:
    def __init__(self, preds, labels=("pos", "neg")):
        self.preds = preds
        self.labels = labels
        self.n_train = 0
        self.seed = 0

    def predict(self, texts):
        return list(self.preds)


def dataset(labels):
    return from_records([(f"t{i}", lab) for i, lab in enumerate(labels)], labels=("pos", "neg"),
                        require_two_labels=False)


class TestMetrics:
    def test_all_correct(self):
        r = evaluate(Stub(["pos", "neg", "pos"]), dataset(["pos", "neg", "pos"]))
        assert (r.accuracy, r.macro_f1) == (1.0, 1.0)

    def test_balanced_confusion(self):
        # TP=1, FP=1, FN=1, TN=1 for the positive class
        r = evaluate(Stub(["pos", "pos", "neg", "neg"]), dataset(["pos", "neg", "pos", "neg"]))
        assert r.per_class_f1 == (0.5, 0.5)
        assert r.macro_f1 == 0.5 and r.accuracy == 0.5

    def test_zero_over_zero_counts_as_zero(self):
        assert per_class_f1(["a", "a"], ["a", "a"], ["a", "b"]) == [1.0, 0.0]
        assert macro_f1(["a", "a"], ["a", "a"], ["a", "b"]) == 0.5

    def test_macro_is_mean(self):
        gold = ["a", "b", "c", "a", "b", "c", "a"]
        pred = ["a", "c", "c", "b", "b", "a", "a"]
        f1 = per_class_f1(gold, pred, ["a", "b", "c"])
        assert macro_f1(gold, pred, ["a", "b", "c"]) == pytest.approx(sum(f1) / 3, abs=1e-12)
        # class a: tp=2 fp=1 fn=1 -> 2/3
        assert f1[0] == pytest.approx(2 / 3, abs=1e-12)
        assert accuracy(gold, pred) == pytest.approx(4 / 7)

    def test_empty_test(self):
        with pytest.raises(ValueError):
            evaluate(Stub([]), from_records([], labels=("pos", "neg"), require_two_labels=False))

    def test_result_serialises(self):
        r = EvalResult(0.5, 0.5, (0.5, 0.5), 4, 4, 0, ("pos", "neg"))
        assert r.to_dict()["per_class_f1"] == [0.5, 0.5]


class TestClassifier:
    def test_separable(self, separable):
        r = evaluate(train_classifier(separable), from_records([("good", "pos"), ("bad", "neg")]))
        assert r.accuracy == 1.0

    def test_same_seed_same_predictions(self, tiny_reviews):
        texts = ["good cake", "rude floors", "the place"]
        a = train_classifier(tiny_reviews, tiny_reviews, seed=3).predict(texts)
        assert a == train_classifier(tiny_reviews, tiny_reviews, seed=3).predict(texts)

    def test_posterior_matches_oracle(self, separable):
        clf = train_classifier(separable)
        assert clf.nb.posterior(["good", "good"])[0] == pytest.approx(121 / 122, abs=1e-12)

    def test_missing_class(self):
        with pytest.raises(ConfigError):
            train_classifier(from_records([("good", "pos")], labels=("pos", "neg"), require_two_labels=False))


@pytest.fixture(scope="module")
def splits():
    return make_splits(SyntheticSpec(n=60), 80, seed=1)


BASE = BoostRunConfig(filters=FilterConfig(perplexity_mode="relative", confidence_threshold=0.9),
                      transform=TransformConfig(token_transform_prob=0.3))


class TestSweep:
    def test_shape_and_aggregation(self, splits):
        train, test = splits
        res = sweep_n(train, test, [2, 4, 8], modes=("raw_backend", "none"), seeds=range(5), base=BASE)
        for mode in ("raw_backend", "none"):
            rows = [r for r in res.rows if r.mode == mode]
            assert [r.n for r in rows] == [2, 4, 8]
            for r in rows:
                assert r.runs == 5
                cells = [c["macro_f1"] for c in res.cells if c["mode"] == mode and c["n"] == r.n]
                assert r.f1_mean == pytest.approx(statistics.fmean(cells))
                assert r.f1_stderr == pytest.approx(statistics.stdev(cells) / math.sqrt(5))
                assert r.acc_stderr >= 0
        header, *lines = res.to_tsv().splitlines()
        assert header.split("\t") == ["mode", "n", "acc_mean", "acc_stderr", "f1_mean", "f1_stderr"]
        assert len(lines) == 6

    def test_repeatable_and_job_independent(self, splits):
        train, test = splits
        a = sweep_n(train, test, [1, 2], modes=("boostaug", "monoaug"), seeds=[0, 1], base=BASE)
        b = sweep_n(train, test, [1, 2], modes=("boostaug", "monoaug"), seeds=[0, 1], base=BASE, jobs=2)
        assert a.to_tsv() == b.to_tsv()
        assert a.cells == b.cells

    def test_single_candidate_raw_is_close_to_no_augmentation(self, splits):
        train, test = splits
        res = sweep_n(train, test, [1], modes=("none", "raw_backend"), seeds=range(3), base=BASE)
        assert abs(res.row("raw_backend", 1).acc_mean - res.row("none", 1).acc_mean) <= 0.1

    @pytest.mark.parametrize("kw", [dict(n_values=[]), dict(modes=("magic",)), dict(seeds=[])])
    def test_errors(self, splits, kw):
        train, test = splits
        args = dict(n_values=[2], modes=("none",), seeds=[0])
        args.update(kw)
        with pytest.raises(ConfigError):
            sweep_n(train, test, args["n_values"], modes=args["modes"], seeds=args["seeds"])
