import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from phone2word import ngram_lm as nlm
from phone2word.ngram_lm import BOS, EOS, UNK, LMLimits, NgramLM
from phone2word.textprep import CleanCorpus, EmptyCorpusError

from oracles import KnOracle


def corpus(*sentences):
    return CleanCorpus.from_sentences([s.split() for s in sentences])


def resolved_prob(lm, w, hist=()):
    return 10.0 ** lm.cond_logprob(w, hist)


def check_normalization(lm, tol=1e-6):
    targets = lm.predictable_vocab
    for hist in lm.histories():
        total = sum(resolved_prob(lm, w, hist) for w in targets)
        assert total == pytest.approx(1.0, abs=tol), f"history {hist}: {total}"


class TestMleTraining:
    def test_deterministic_corpus(self):
        lm = nlm.train_trigram(corpus(*(["a b"] * 5)), smoothing="none")
        assert resolved_prob(lm, "b", ("a",)) == 1.0
        assert resolved_prob(lm, "a", (BOS,)) == 1.0

    def test_split_history(self):
        lm = nlm.train_trigram(corpus("a b", "a c"), smoothing="none")
        assert resolved_prob(lm, "b", ("a",)) == 0.5

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            nlm.train_trigram(CleanCorpus.from_sentences([]))

    def test_normalization(self):
        lm = nlm.train_trigram(corpus("a b c", "a b", "c a", "b"), smoothing="none")
        check_normalization(lm)

    def test_backoff_weights_finite(self):
        lm = nlm.train_trigram(corpus("a b c", "c b a"), smoothing="none")
        for table in lm.tables:
            for logp, bow in table.values():
                assert math.isfinite(logp) and math.isfinite(bow)


class TestKneserNey:
    def test_matches_direct_formula_oracle(self):
        sents = ["a b", "a c", "b c"]
        lm = nlm.train_trigram(corpus(*sents), smoothing="kneser-ney", discount=0.5)
        oracle = KnOracle([s.split() for s in sents], discount=0.5)
        for w in ["a", "b", "c", EOS, UNK]:
            for hist in [(), ("a",), ("b",), (BOS,), (BOS, "a"), ("a", "b"), ("c", "a")]:
                got = resolved_prob(lm, w, hist)
                want = oracle.prob(w, hist)
                assert got == pytest.approx(want, rel=1e-9), (w, hist)

    def test_larger_corpus_against_oracle(self):
        rng = random.Random(5)
        vocab = ["uwa", "imbo", "neza", "cyane", "kandi", "ubu"]
        sents = [[rng.choice(vocab) for _ in range(rng.randrange(1, 7))]
                 for _ in range(30)]
        lm = nlm.train_trigram(CleanCorpus.from_sentences(sents),
                               smoothing="kneser-ney", discount=0.4)
        oracle = KnOracle(sents, discount=0.4)
        for w in vocab + [EOS, UNK]:
            for hist in [(), ("uwa",), ("neza", "cyane"), (BOS,), (BOS, "imbo"),
                         ("zzz",), ("uwa", "zzz")]:
                assert resolved_prob(lm, w, hist) == \
                    pytest.approx(oracle.prob(w, hist), rel=1e-9), (w, hist)

    def test_normalization(self):
        lm = nlm.train_trigram(corpus("a b c", "a b", "c a a", "b"),
                               smoothing="kneser-ney", discount=0.5)
        check_normalization(lm)

    def test_score_matches_oracle(self):
        sents = ["a b", "a c", "b c", "a b c"]
        lm = nlm.train_trigram(corpus(*sents), smoothing="kneser-ney", discount=0.5)
        oracle = KnOracle([s.split() for s in sents], discount=0.5)
        for s in (["a", "b"], ["c"], ["a", "zzz", "b"], []):
            assert lm.score(s) == pytest.approx(oracle.sentence_logprob(s), rel=1e-9)

    def test_discount_validation(self):
        with pytest.raises(ValueError):
            nlm.train_trigram(corpus("a b"), smoothing="kneser-ney", discount=1.0)
        with pytest.raises(ValueError):
            nlm.train_trigram(corpus("a b"), smoothing="klondike")

    @given(st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=5),
                    min_size=1, max_size=12))
    @settings(max_examples=40, deadline=None)
    def test_normalization_property(self, sents):
        lm = nlm.train_trigram(CleanCorpus.from_sentences(sents),
                               smoothing="kneser-ney", discount=0.5)
        check_normalization(lm)


class TestScore:
    def test_deterministic_corpus_score(self):
        lm = nlm.train_trigram(corpus(*(["a b"] * 5)), smoothing="none")
        # p(a|<s>) = p(b|<s> a) = p(</s>|a b) = 1
        assert lm.score(["a", "b"]) == pytest.approx(0.0)

    def test_empty_sentence(self):
        lm = nlm.train_trigram(corpus("a b", "a"), smoothing="none")
        assert lm.score([]) == lm.cond_logprob(EOS, (BOS,))

    def test_oov_is_finite(self):
        lm = nlm.train_trigram(corpus("a b"), smoothing="none")
        assert math.isfinite(lm.score(["qqq", "a"]))

    def test_monotone_data(self):
        base = ["a b c", "c a"]
        lm1 = nlm.train_trigram(corpus(*base))
        lm2 = nlm.train_trigram(corpus(*base, "b c a"))
        for n in range(3):
            assert set(lm1.tables[n]) <= set(lm2.tables[n])


class TestPerplexity:
    def test_uniform_unigram(self):
        # V symbols at probability 1/V each: perplexity is V on any text
        V = 8
        words = [f"w{i}" for i in range(V - 2)]
        table = {(w,): (math.log10(1 / V), 0.0) for w in words}
        table[(EOS,)] = (math.log10(1 / V), 0.0)
        table[(UNK,)] = (math.log10(1 / V), 0.0)
        table[(BOS,)] = (nlm.LOG10_ZERO, 0.0)
        lm = NgramLM(1, [table], set(words) | {BOS, EOS, UNK})
        dev = CleanCorpus.from_sentences([["w0", "w1"], ["w2"]])
        assert lm.perplexity(dev) == pytest.approx(V)

    def test_deterministic_corpus_perplexity_one(self):
        lm = nlm.train_trigram(corpus(*(["a b"] * 5)), smoothing="none")
        assert lm.perplexity(corpus("a b")) == pytest.approx(1.0)

    def test_kn_perplexity_matches_oracle(self):
        sents = [["a", "b"], ["a", "c"], ["b", "c"], ["c"], ["a", "b", "c"],
                 ["b"], ["c", "a"], ["a"], ["b", "c", "a"], ["c", "b"]]
        lm = nlm.train_trigram(CleanCorpus.from_sentences(sents),
                               smoothing="kneser-ney", discount=0.5)
        oracle = KnOracle(sents, discount=0.5)
        dev = CleanCorpus.from_sentences([["a", "b", "c"], ["c", "a"]])
        total = sum(oracle.sentence_logprob(s) for s in dev.sentences)
        tokens = sum(len(s) + 1 for s in dev.sentences)
        assert lm.perplexity(dev) == pytest.approx(10 ** (-total / tokens), rel=1e-9)

    def test_empty_dev_rejected(self):
        lm = nlm.train_trigram(corpus("a b"))
        with pytest.raises(EmptyCorpusError):
            lm.perplexity(CleanCorpus.from_sentences([]))


class TestPruning:
    def big_lm(self):
        rng = random.Random(1)
        vocab = [f"w{i}" for i in range(8)]
        sents = [[rng.choice(vocab) for _ in range(rng.randrange(2, 6))]
                 for _ in range(40)]
        return nlm.train_trigram(CleanCorpus.from_sentences(sents))

    def test_within_limits_unchanged(self):
        lm = self.big_lm()
        out = nlm.prune_to_limits(lm, LMLimits())
        assert out.tables == lm.tables

    def test_trigram_collapse(self):
        lm = self.big_lm()
        out = nlm.prune_to_limits(lm, LMLimits(120000, 30000000, 0))
        assert out.order == 2
        check_normalization(out)

    def test_keeps_top_by_probability(self):
        lm = self.big_lm()
        lim = LMLimits(120000, 30000000, 3)
        out = nlm.prune_to_limits(lm, lim)
        assert len(out.tables[2]) == 3
        kept = set(out.tables[2])
        best = sorted(lm.tables[2], key=lambda g: (-lm.tables[2][g][0], g))[:3]
        assert kept == set(best)
        check_normalization(out)

    def test_unigram_prune_renormalizes(self):
        lm = self.big_lm()
        out = nlm.prune_to_limits(lm, LMLimits(6, 30000000, 150000))
        assert len(out.tables[0]) <= 6
        check_normalization(out)
        # higher-order entries over dropped words are gone
        kept_words = {k[0] for k in out.tables[0]}
        for table in out.tables[1:]:
            for gram in table:
                assert set(gram) <= kept_words

    def test_history_closure(self):
        lm = self.big_lm()
        out = nlm.prune_to_limits(lm, LMLimits(120000, 10, 150000))
        for gram in out.tables[2]:
            assert gram[:2] in out.tables[1]


class TestArpa:
    def test_roundtrip_lossless(self, tmp_path):
        lm = nlm.train_trigram(corpus("a b c", "a b", "c a"), discount=0.5)
        path = tmp_path / "m.arpa"
        nlm.write_arpa(lm, path)
        back = nlm.read_arpa(path)
        assert back.order == lm.order
        assert back.tables == lm.tables
        assert back.vocab == lm.vocab

    def test_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\ta\n\n\\end\\\n",
                        encoding="utf-8")
        with pytest.raises(nlm.MalformedArpaError):
            nlm.read_arpa(path)

    def test_hand_written_unigram_file(self, tmp_path):
        path = tmp_path / "uni.arpa"
        path.write_text(
            "\\data\\\nngram 1=3\n\n\\1-grams:\n"
            "-0.4771\ta\n-0.4771\tb\n-0.4771\t</s>\n\n\\end\\\n",
            encoding="utf-8")
        lm = nlm.read_arpa(path)
        assert lm.order == 1
        assert lm.tables[0][("a",)] == (-0.4771, 0.0)
        assert resolved_prob(lm, "b") == pytest.approx(10 ** -0.4771)

    def test_missing_end_rejected(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n",
                        encoding="utf-8")
        with pytest.raises(nlm.MalformedArpaError):
            nlm.read_arpa(path)

    def test_garbage_line_has_line_number(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n\\1-grams:\nnot a float\ta\n\n\\end\\\n",
                        encoding="utf-8")
        with pytest.raises(nlm.MalformedArpaError, match=":5:"):
            nlm.read_arpa(path)

    @given(st.lists(st.lists(st.sampled_from("abc"), min_size=1, max_size=4),
                    min_size=1, max_size=8))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, sents):
        import tempfile
        lm = nlm.train_trigram(CleanCorpus.from_sentences(sents))
        with tempfile.TemporaryDirectory() as d:
            path = f"{d}/m.arpa"
            nlm.write_arpa(lm, path)
            assert nlm.read_arpa(path).tables == lm.tables


class TestLimitsValidation:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LMLimits(max_unigrams=-1)

    def test_zero_trigrams_allowed(self):
        assert LMLimits(max_trigrams=0).max_trigrams == 0
