import io
import math
from functools import lru_cache

import pytest
from hypothesis import given, strategies as st

from pagehtr.errors import ValidationError
from pagehtr.language import (
    BOS,
    EOS,
    UNK,
    Candidate,
    CharLM,
    Lexicon,
    in_vocab_proportion,
    levenshtein,
    perplexity,
    rank_candidates,
    ranking_key,
    tokenize,
    train_char_ngram,
)


def lev_oracle(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0 or j == 0:
            return i + j
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


class TestTraining:
    def test_bigram_additive_estimate(self):
        lm = train_char_ngram(["ab"] * 10, order=2, smoothing_k=1.0)
        # vocabulary {a, b, EOS, UNK}; after "a" we saw "b" ten times
        assert len(lm.vocab) == 4
        assert lm.prob("b", "a") == pytest.approx(11 / 14)
        assert lm.prob("a", "a") == pytest.approx(1 / 14)
        assert lm.prob(EOS, "b") == pytest.approx(11 / 14)
        assert lm.prob("a", BOS) == pytest.approx(11 / 14)

    def test_unseen_context_uniform(self):
        lm = train_char_ngram(["abc", "cab"], order=3)
        assert lm.prob("a", "zz") == pytest.approx(1 / len(lm.vocab))

    def test_order_one_is_unigram(self):
        lm = train_char_ngram(["aab"], order=1, smoothing_k=0.5)
        # counts a:2 b:1 EOS:1, |V| = 4
        assert lm.prob("a", "") == pytest.approx(2.5 / 6)
        assert lm.prob("b", "whatever") == pytest.approx(1.5 / 6)

    def test_bos_never_predicted(self):
        lm = train_char_ngram(["ab"], order=3)
        assert BOS not in lm.vocab and EOS in lm.vocab and UNK in lm.vocab

    def test_unknown_chars_map_to_unk(self):
        lm = train_char_ngram(["ab"], order=2)
        assert lm.prob("z", "a") == lm.prob(UNK, "a")
        assert lm.context("zq") == UNK

    def test_empty_corpus(self):
        with pytest.raises(ValidationError):
            train_char_ngram([])

    @given(st.lists(st.text(alphabet="abc ", max_size=12), min_size=1, max_size=6), st.integers(1, 4))
    def test_distributions_normalised(self, corpus, order):
        lm = train_char_ngram(corpus, order=order)
        for ctx in list(lm.counts)[:5] + [BOS * (order - 1)]:
            assert math.fsum(lm.prob(c, ctx) for c in lm.vocab) == pytest.approx(1.0)

    def test_deterministic_serialisation(self, corpus_lines):
        a = train_char_ngram(corpus_lines, order=4)
        b = train_char_ngram(corpus_lines, order=4)
        assert a.to_bytes() == b.to_bytes()

    def test_save_load_round_trip(self, corpus_lines):
        lm = train_char_ngram(corpus_lines[:10], order=3, smoothing_k=0.25)
        back = CharLM.load(io.BytesIO(lm.to_bytes()))
        assert back.vocab == lm.vocab and back.order == 3 and back.smoothing_k == 0.25
        for text in ("the cat", "Scrooge!", "zzz"):
            assert back.perplexity(text) == lm.perplexity(text)

    def test_load_rejects_garbage(self):
        with pytest.raises(ValidationError):
            CharLM.load(io.BytesIO(b"not a model"))


class TestPerplexity:
    @given(st.text(alphabet="abcdefg", min_size=1, max_size=40))
    def test_uniform_equals_vocab_size(self, text):
        lm = CharLM.uniform("abcdefg", order=3)
        assert perplexity(lm, text) == pytest.approx(len(lm.vocab), rel=1e-12)

    def test_constant_probability(self):
        # order-1 model where every symbol has the same probability p = 1/|V|
        lm = CharLM(1, {"": {"a": 3, EOS: 3, UNK: 3}}, 1.0, "a")
        p = lm.prob("a", "")
        assert perplexity(lm, "aaaa") == pytest.approx(1 / p)

    def test_empty_text(self):
        with pytest.raises(ValidationError):
            perplexity(CharLM.uniform("ab"), "")

    def test_in_domain_beats_random(self, corpus_lines):
        lm = train_char_ngram(corpus_lines[:-10], order=5)
        held_out = " ".join(corpus_lines[-10:])[:200]
        assert lm.perplexity(held_out) < lm.perplexity("xq zvj kwpfh ymgq" * 10)


class TestLevenshtein:
    @pytest.mark.parametrize("a,b,d", [("", "abc", 3), ("abc", "abc", 0), ("kitten", "sitting", 3), ("flaw", "lawn", 2)])
    def test_examples(self, a, b, d):
        assert levenshtein(a, b) == d == lev_oracle(a, b)

    @given(st.text(alphabet="abcd", max_size=10), st.text(alphabet="abcd", max_size=10))
    def test_matches_recursive_oracle(self, a, b):
        assert levenshtein(a, b) == lev_oracle(a, b)

    @given(st.text(max_size=15), st.text(max_size=15))
    def test_bounds(self, a, b):
        d = levenshtein(a, b)
        assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


class TestLexicon:
    lex = Lexicon.from_lines(["the", "cat", "Sat"])

    @pytest.mark.parametrize("text,expected", [("the cat", 1.0), ("the qzx", 0.5), ("...", 1.0), ("", 1.0), ("SAT, the!", 1.0)])
    def test_in_vocab(self, text, expected):
        assert in_vocab_proportion(text, self.lex) == expected

    def test_tokenize(self):
        assert tokenize("Don't stop-now 42x") == ["don", "t", "stop", "now", "x"]

    def test_from_file_skips_blank(self):
        lex = Lexicon.from_file(io.StringIO("a\n\n  b \n"))
        assert lex.words == frozenset({"a", "b"})


class TestRanking:
    lm = CharLM.uniform("abcdefghijklmnopqrstuvwxyz ", order=2)
    lex = Lexicon.from_lines(["cat", "dog"])

    def test_in_vocab_dominates(self):
        cands = [Candidate("qqq"), Candidate("dog")]
        assert rank_candidates(cands, "qqq", self.lex, self.lm)[0].text == "dog"

    def test_distance_second(self):
        cands = [Candidate("zzzz"), Candidate("cax")]
        assert rank_candidates(cands, "cay", self.lex, self.lm)[0].text == "cax"

    def test_perplexity_third(self):
        lm = train_char_ngram(["ab ab ab ab"], order=3)
        cands = [Candidate("ba"), Candidate("ab")]
        # both are one out-of-vocabulary token at distance 1 from "aa"
        assert rank_candidates(cands, "aa", Lexicon.from_lines(["x"]), lm)[0].text == "ab"

    def test_full_ties_stable(self):
        cands = [Candidate("cat", -1.0), Candidate("cat", -2.0), Candidate("cat", -3.0)]
        assert rank_candidates(cands, "cat", self.lex, self.lm) == cands

    def test_empty_candidate_ranks_last_on_perplexity(self):
        key = ranking_key("", "", self.lex, self.lm)
        assert key[2] == math.inf

    def test_no_candidates(self):
        with pytest.raises(ValidationError):
            rank_candidates([], "x", self.lex, self.lm)

    def test_candidate_score_finite(self):
        with pytest.raises(ValidationError):
            Candidate("a", -math.inf)
