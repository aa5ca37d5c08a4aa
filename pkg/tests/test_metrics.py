"""Metric oracles (hand-computed) and metric properties."""

import numpy as np
import pytest

from eyetrans.errors import LengthMismatch
from eyetrans.metrics import (PRF, classification_report, mean_rouge, rouge_l,
                              rouge_n, rouge_report, rouge_s, rouge_su)


class TestClassificationOracles:
    def test_all_correct_is_100(self):
        r = classification_report([0, 1, 2, 1], [0, 1, 2, 1])
        assert r.maf1_at1 == r.map_at1 == r.mar_at1 == 100.0
        assert r.accuracy == 1.0

    def test_hand_computed_confusion(self):
        # labels [0,0,1,1], preds [0,1,1,1]:
        #   class0: P=1, R=.5, F=2/3; class1: P=2/3, R=1, F=4/5
        r = classification_report([0, 1, 1, 1], [0, 0, 1, 1])
        assert r.per_class[0].precision == pytest.approx(1.0)
        assert r.per_class[0].recall == pytest.approx(0.5)
        assert r.per_class[1].precision == pytest.approx(2 / 3)
        assert r.per_class[1].recall == pytest.approx(1.0)
        assert r.maf1_at1 == pytest.approx(100 * (2 / 3 + 4 / 5) / 2, abs=1e-9)

    def test_every_prediction_wrong_is_zero(self):
        r = classification_report([1, 0], [0, 1])
        assert r.maf1_at1 == 0.0
        assert r.map_at1 == 0.0
        assert r.mar_at1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            classification_report([0], [0, 1])

    def test_absent_classes_excluded_from_macro(self):
        # class 7 never appears anywhere: macro over {0, 1} only
        a = classification_report([0, 1], [0, 1])
        assert set(a.per_class) == {0, 1}

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 60))
            labels = rng.integers(0, 5, n).tolist()
            preds = rng.integers(0, 5, n).tolist()
            perm = rng.permutation(5).tolist()
            r1 = classification_report(preds, labels)
            r2 = classification_report([perm[p] for p in preds],
                                       [perm[l] for l in labels])
            assert r1.maf1_at1 == pytest.approx(r2.maf1_at1, abs=1e-9)
            assert r1.map_at1 == pytest.approx(r2.map_at1, abs=1e-9)
            assert r1.mar_at1 == pytest.approx(r2.mar_at1, abs=1e-9)


class TestRougeN:
    def test_identical_is_one(self):
        assert rouge_n("a b c".split(), "a b c".split(), 1).f1 == 1.0
        assert rouge_n("a b c".split(), "a b c".split(), 2).f1 == 1.0

    def test_two_of_three_unigrams(self):
        prf = rouge_n("a b c".split(), "a b d".split(), 1)
        assert prf.precision == pytest.approx(2 / 3, abs=1e-12)
        assert prf.recall == pytest.approx(2 / 3, abs=1e-12)
        assert prf.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_disjoint_sets_zero(self):
        assert rouge_n("a b".split(), "c d".split(), 1) == PRF(0.0, 0.0, 0.0)

    def test_clipping(self):
        # candidate repeats 'a' three times, reference has it once
        prf = rouge_n("a a a".split(), "a b".split(), 1)
        assert prf.precision == pytest.approx(1 / 3)
        assert prf.recall == pytest.approx(1 / 2)

    def test_single_token_rouge1_is_exact_match(self):
        assert rouge_n(["x"], ["x"], 1).f1 == 1.0
        assert rouge_n(["x"], ["y"], 1).f1 == 0.0

    def test_short_sequences_have_no_bigrams(self):
        assert rouge_n(["x"], ["y"], 2).f1 == 0.0
        assert rouge_n(["x"], ["x"], 2).f1 == 0.0

    def test_empty_conventions(self):
        assert rouge_n([], [], 1).f1 == 1.0
        assert rouge_n(["a"], [], 1).f1 == 0.0
        assert rouge_n([], ["a"], 1).f1 == 0.0


class TestRougeL:
    def test_lcs_two_of_three(self):
        prf = rouge_l("a b c".split(), "a b d".split())
        assert prf.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_reference_empty_zero(self):
        assert rouge_l("a b c".split(), []) == PRF(0.0, 0.0, 0.0)

    def test_reversed_distinct_tokens_lcs_one(self):
        prf = rouge_l("a b c".split(), "c b a".split())
        assert prf.recall == pytest.approx(1 / 3)
        assert prf.precision == pytest.approx(1 / 3)

    def test_subsequence_not_substring(self):
        prf = rouge_l("a x b y c".split(), "a b c".split())
        assert prf.recall == 1.0
        assert prf.precision == pytest.approx(3 / 5)


class TestRougeSkip:
    def test_all_pairs_match(self):
        prf = rouge_s("a b c".split(), "a b c".split(), max_skip=4)
        assert prf.f1 == 1.0

    def test_order_matters_for_s_but_su_credits_unigrams(self):
        s = rouge_s("a b".split(), "b a".split())
        su = rouge_su("a b".split(), "b a".split())
        assert s.f1 == 0.0
        assert su.f1 > 0.0
        # hand count: extended pairs {(#,a),(#,b),(a,b)} vs {(#,b),(#,a),(b,a)}
        assert su.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_candidate_zero(self):
        assert rouge_s([], "a b".split()) == PRF(0.0, 0.0, 0.0)
        assert rouge_su([], "a b".split()) == PRF(0.0, 0.0, 0.0)

    def test_skip_window_bounds_pairs(self):
        # tokens a _ _ _ _ b: gap of 4 tokens exactly at max_skip=4
        far = "a x1 x2 x3 x4 b".split()
        assert ("a", "b") in _skip_pairs(far, 4)
        assert ("a", "b") not in _skip_pairs(far, 3)

    def test_skip_distance_default_is_4(self):
        c = "a w1 w2 w3 w4 w5 b".split()  # 5 tokens between: beyond window
        r = "a b".split()
        assert rouge_s(c, r).recall == 0.0

    def test_single_tokens_su_equals_unigram_match(self):
        assert rouge_su(["x"], ["x"]).f1 == 1.0
        assert rouge_su(["x"], ["y"]).f1 == 0.0


def _skip_pairs(tokens, max_skip):
    from eyetrans.metrics import _skip_bigrams

    return set(_skip_bigrams(tokens, max_skip))


class TestRougeProperties:
    def test_f1_symmetric_under_swap(self):
        rng = np.random.default_rng(17)
        vocab = list("abcdefg")
        for _ in range(100):
            c = [vocab[i] for i in rng.integers(0, 7, int(rng.integers(0, 12)))]
            r = [vocab[i] for i in rng.integers(0, 7, int(rng.integers(0, 12)))]
            for fn in (lambda x, y: rouge_n(x, y, 1), lambda x, y: rouge_n(x, y, 2),
                       rouge_l, rouge_s, rouge_su):
                ab = fn(c, r)
                ba = fn(r, c)
                assert ab.f1 == pytest.approx(ba.f1, abs=1e-12)
                assert ab.precision == pytest.approx(ba.recall, abs=1e-12)

    def test_adding_candidate_token_never_increases_recall(self):
        rng = np.random.default_rng(23)
        vocab = list("abcde")
        for _ in range(100):
            c = [vocab[i] for i in rng.integers(0, 5, int(rng.integers(1, 10)))]
            r = [vocab[i] for i in rng.integers(0, 5, int(rng.integers(1, 10)))]
            c2 = c + ["zzz"]  # irrelevant token
            for fn in (lambda x, y: rouge_n(x, y, 1), lambda x, y: rouge_n(x, y, 2),
                       rouge_l):
                assert fn(c2, r).recall <= fn(c, r).recall + 1e-12

    def test_report_and_mean(self):
        rep = rouge_report("a b c".split(), "a b d".split())
        d = rep.as_dict()
        assert d["rouge1"]["f1"] == pytest.approx(100 * 2 / 3)
        mean = mean_rouge([rep, rep])
        assert mean.rouge1.f1 == pytest.approx(rep.rouge1.f1)
        with pytest.raises(ValueError):
            mean_rouge([])

    def test_values_within_bounds(self):
        rng = np.random.default_rng(31)
        vocab = list("abc")
        for _ in range(200):
            c = [vocab[i] for i in rng.integers(0, 3, int(rng.integers(0, 8)))]
            r = [vocab[i] for i in rng.integers(0, 3, int(rng.integers(0, 8)))]
            rep = rouge_report(c, r)
            for prf in (rep.rouge1, rep.rouge2, rep.rougeS, rep.rougeSU, rep.rougeL):
                assert 0.0 <= prf.precision <= 1.0
                assert 0.0 <= prf.recall <= 1.0
                assert 0.0 <= prf.f1 <= 1.0
