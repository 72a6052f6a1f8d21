import pytest
from hypothesis import given, settings, strategies as st

from phone2word import matcher
from phone2word.g2p import Lexicon, PhoneMap
from phone2word.matcher import LcsParams, TrieTunings, build_trie, lcs_decode, trie_decode

from oracles import naive_lcs


def lexicon(entries):
    lex = Lexicon()
    for word, pron in entries.items():
        lex.add(word, tuple(pron.split()))
    return lex


AB_LEX = lexicon({"a": "a", "ab": "a b", "ba": "b a"})


class TestBuildTrie:
    def test_paths_spell_pronunciations(self):
        trie = build_trie(AB_LEX)
        assert trie.lookup(["a"]) == ["a"]
        assert trie.lookup(["a", "b"]) == ["ab"]
        assert trie.lookup(["b", "a"]) == ["ba"]

    def test_empty_prefix_bears_no_word(self):
        trie = build_trie(AB_LEX)
        assert trie.lookup([]) == []
        assert trie.lookup(["b"]) == []

    def test_exhaustive_membership(self):
        lex = lexicon({"x": "k a", "y": "k a t", "z": "t a"})
        trie = build_trie(lex)
        for word, prons in lex.entries.items():
            for pron in prons:
                assert word in trie.lookup(pron)
        assert trie.lookup(["k"]) == []

    def test_node_count_bound(self):
        lex = lexicon({"x": "k a", "y": "k a t", "z": "t a"})
        trie = build_trie(lex)
        total_phones = sum(len(p) for prons in lex.entries.values() for p in prons)
        assert trie.size <= total_phones + 1

    def test_empty_lexicon_rejected(self):
        with pytest.raises(ValueError):
            build_trie(Lexicon())


class TestTrieDecode:
    def test_greedy_overshoot(self):
        # greedy grabs "ab", never the a/ba split
        words, unmatched = trie_decode(["a", "b", "a"], build_trie(AB_LEX))
        assert words == ["ab", "a"]
        assert unmatched == []

    def test_exact_single_word(self):
        words, unmatched = trie_decode(["b", "a"], build_trie(AB_LEX))
        assert words == ["ba"] and unmatched == []

    def test_skip_unmatchable_phone(self):
        words, unmatched = trie_decode(["x", "a"], build_trie(AB_LEX))
        assert words == ["a"]
        assert unmatched == [(0, "x")]

    def test_homonym_unigram_tiebreak(self):
        lex = lexicon({"w1": "k a", "w2": "k a"})
        tunings = TrieTunings(homonym_unigram={"w1": 5, "w2": 9})
        words, _ = trie_decode(["k", "a"], build_trie(lex), tunings)
        assert words == ["w2"]

    def test_preferred_vocab_beats_unigram(self):
        lex = lexicon({"w1": "k a", "w2": "k a"})
        tunings = TrieTunings(preferred_vocab={"w1"},
                              homonym_unigram={"w1": 5, "w2": 9})
        words, _ = trie_decode(["k", "a"], build_trie(lex), tunings)
        assert words == ["w1"]

    def test_phone_simplification(self):
        lex = lexicon({"kat": "k a t"})
        tunings = TrieTunings(phone_simplification=PhoneMap(
            {"K": "k", "A": "a", "T": "t"}))
        words, _ = trie_decode(["K", "A", "T"], build_trie(lex), tunings)
        assert words == ["kat"]

    def test_soundex_classes_soft_match(self):
        lex = lexicon({"pat": "p a t"})
        classes = matcher.make_soundex_classes([{"p", "b"}], {"p", "b", "a", "t"})
        words, _ = trie_decode(["b", "a", "t"], build_trie(lex),
                               TrieTunings(soundex_classes=classes))
        assert words == ["pat"]

    def test_unambiguous_concatenation_roundtrip(self):
        lex = lexicon({"kat": "k a t", "zu": "z u", "pomo": "p o m o"})
        trie = build_trie(lex)
        seq = ["kat", "zu", "pomo", "zu", "kat"]
        phones = [p for w in seq for p in lex.entries[w][0]]
        words, unmatched = trie_decode(phones, trie)
        assert words == seq and unmatched == []

    def test_shorter_match_bias_moves_toward_target(self):
        lex = lexicon({"a": "a", "aa": "a a"})
        phones = ["a", "a"] * 6
        biased = TrieTunings(target_length_dist={1: 1.0},
                             shorter_match_bias=1.0, seed=3)
        words, _ = trie_decode(phones, build_trie(lex), biased)
        assert "a" in words  # shorter matches taken
        unbiased, _ = trie_decode(phones, build_trie(lex), TrieTunings())
        assert unbiased == ["aa"] * 6

    def test_bias_deterministic_under_seed(self):
        lex = lexicon({"a": "a", "aa": "a a"})
        phones = ["a"] * 9
        t = TrieTunings(target_length_dist={1: 0.5, 2: 0.5},
                        shorter_match_bias=0.5, seed=11)
        first = trie_decode(phones, build_trie(lex), t)
        second = trie_decode(phones, build_trie(lex), t)
        assert first == second

    @given(st.lists(st.sampled_from(["a", "b", "x"]), max_size=12))
    def test_every_phone_covered_or_reported(self, phones):
        words, unmatched = trie_decode(phones, build_trie(AB_LEX))
        covered = sum(len(AB_LEX.entries[w][0]) for w in words)
        assert covered + len(unmatched) == len(phones)
        assert [p for _, p in unmatched] == [p for i, p in enumerate(phones)
                                             if i in {i for i, _ in unmatched}]


class TestSoundexClassify:
    def test_identity_partition(self):
        classes = matcher.make_soundex_classes([], {"p", "b"})
        assert matcher.soundex_classify("p", classes) == "p"

    def test_merged_group(self):
        classes = matcher.make_soundex_classes([{"p", "b"}], {"p", "b", "t"})
        assert matcher.soundex_classify("p", classes) == \
            matcher.soundex_classify("b", classes)

    def test_round_trip_over_inventory(self):
        inventory = {"p", "b", "t", "d", "a"}
        classes = matcher.make_soundex_classes([{"p", "b"}, {"t", "d"}], inventory)
        groups = {}
        for p in sorted(inventory):
            groups.setdefault(matcher.soundex_classify(p, classes), set()).add(p)
        assert set(map(frozenset, groups.values())) == \
            {frozenset({"p", "b"}), frozenset({"t", "d"}), frozenset({"a"})}

    def test_unknown_phone(self):
        with pytest.raises(ValueError):
            matcher.soundex_classify("q", {"p": "p"})


class TestLcsDecode:
    def test_exact_match(self):
        lex = lexicon({"kata": "k a t a"})
        words, unmatched = lcs_decode(["k", "a", "t", "a"], lex)
        assert words == ["kata"] and unmatched == []

    def test_noise_flanked_match(self):
        lex = lexicon({"kat": "k a t"})
        words, unmatched = lcs_decode(["x", "k", "a", "t", "y"], lex,
                                      LcsParams(coverage_threshold=1.0))
        assert words == ["kat"]
        assert unmatched == [(0, "x"), (4, "y")]

    def test_residue_tiebreak(self):
        # same LCS length 4: "long" has residue 1, "exact" residue 0
        lex = lexicon({"exact": "k a t a", "long": "k a t a z"})
        words, _ = lcs_decode(["k", "a", "t", "a"], lex)
        assert words[0] == "exact"

    def test_coverage_threshold_blocks_partial(self):
        lex = lexicon({"longword": "l o n g w o r d"})
        words, unmatched = lcs_decode(["l", "o", "n"], lex,
                                      LcsParams(coverage_threshold=0.8))
        assert words == []
        assert len(unmatched) == 3

    def test_min_match_len_stops_iteration(self):
        lex = lexicon({"a": "a"})
        words, unmatched = lcs_decode(["a"], lex, LcsParams(min_match_len=2))
        assert words == [] and unmatched == [(0, "a")]

    def test_relaxation_prefers_much_smaller_residue(self):
        # "bigger" reaches LCS 4 with residue 3; "tight" LCS 3 with residue 0
        lex = lexicon({"bigger": "k a t a x y z", "tight": "a t a"})
        params = LcsParams(coverage_threshold=0.3, relaxation=(1, 2))
        words, _ = lcs_decode(["k", "a", "t", "a"], lex, params)
        assert words[0] == "tight"
        no_relax, _ = lcs_decode(["k", "a", "t", "a"], lex,
                                 LcsParams(coverage_threshold=0.3, relaxation=(0, 99)))
        assert no_relax[0] == "bigger"

    def test_output_in_position_order(self):
        lex = lexicon({"zu": "z u", "kat": "k a t"})
        words, _ = lcs_decode(["z", "u", "x", "k", "a", "t"], lex,
                              LcsParams(coverage_threshold=1.0))
        assert words == ["zu", "kat"]

    def test_ab_fixture_contrast_with_trie(self):
        words, unmatched = lcs_decode(["a", "b", "a"], AB_LEX)
        assert words == ["ab"]
        assert unmatched == [(2, "a")]

    @given(st.lists(st.sampled_from(["k", "a", "t", "z", "u"]), max_size=10))
    @settings(max_examples=60, deadline=None)
    def test_every_phone_covered_or_reported(self, phones):
        lex = lexicon({"kat": "k a t", "zu": "z u", "tak": "t a k"})
        words, unmatched = lcs_decode(phones, lex)
        assert len(unmatched) <= len(phones)
        positions = {i for i, _ in unmatched}
        assert len(positions) == len(unmatched)

    def test_chosen_lcs_is_global_max_each_iteration(self):
        # rescan: winner's LCS length must equal the max over candidates
        lex = lexicon({"kata": "k a t a", "zu": "z u", "kat": "k a t"})
        phones = ["k", "a", "t", "a", "z", "u"]
        words, _ = lcs_decode(phones, lex, LcsParams(coverage_threshold=0.8))
        assert words[0] == "kata"  # global max LCS (4) wins the first round
        lengths = {w: naive_lcs(phones, lex.entries[w][0])[0] for w in lex.entries}
        assert lengths["kata"] == max(lengths.values())


class TestFileFormats:
    def test_phone_file(self, tmp_path):
        path = tmp_path / "phones.txt"
        path.write_text("k a t\nz u\n", encoding="utf-8")
        assert matcher.read_phone_file(path) == [["k", "a", "t"], ["z", "u"]]

    def test_word_file(self, tmp_path):
        path = tmp_path / "words.txt"
        matcher.write_word_file([["kat"], ["zu", "kat"]], path)
        assert path.read_text(encoding="utf-8") == "kat\nzu kat\n"

    def test_unmatched_report(self, tmp_path):
        path = tmp_path / "unmatched.tsv"
        matcher.write_unmatched_report([[(0, "x")], [], [(2, "y")]], path)
        assert path.read_text(encoding="utf-8") == "0\t0\tx\n2\t2\ty\n"
