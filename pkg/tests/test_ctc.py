import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_grid
from pagehtr.ctc import (
    Alphabet,
    EmissionGrid,
    beam_search_decode,
    concat_grids,
    ctc_collapse,
    exhaustive_decode,
    exhaustive_distribution,
    greedy_decode,
    one_hot_grid,
    read_grid,
    write_grid,
)
from pagehtr.errors import SearchSpaceTooLarge, ValidationError
from pagehtr.language import BOS, CharLM

AB = Alphabet.from_chars("ab")  # 0 = blank, 1 = a, 2 = b
A = Alphabet.from_chars("a")


def forward_prob(grid: EmissionGrid, text: str) -> float:
    """Textbook CTC forward recursion over the blank-extended label sequence."""
    blank = grid.alphabet.blank_index
    ext = [blank]
    for ch in text:
        ext += [grid.alphabet.index(ch), blank]
    p = grid.probs
    alpha = np.zeros(len(ext))
    alpha[0] = p[0, ext[0]]
    if len(ext) > 1:
        alpha[1] = p[0, ext[1]]
    for t in range(1, grid.n_steps):
        new = np.zeros_like(alpha)
        for s in range(len(ext)):
            acc = alpha[s]
            if s >= 1:
                acc += alpha[s - 1]
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc += alpha[s - 2]
            new[s] = acc * p[t, ext[s]]
        alpha = new
    return float(alpha[-1] + (alpha[-2] if len(ext) > 1 else 0.0))


class TestAlphabet:
    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            Alphabet(("", "a", "a"))

    def test_multichar_symbol_rejected(self):
        with pytest.raises(ValidationError):
            Alphabet(("", "ab"))

    def test_blank_elsewhere(self):
        alpha = Alphabet.from_chars("ab", blank="-", blank_index=2)
        assert alpha.symbols == ("a", "b", "-") and alpha.chars == ("a", "b")


class TestGrid:
    def test_row_sum_checked(self):
        with pytest.raises(ValidationError, match="row 1"):
            EmissionGrid(A, [[0.5, 0.5], [0.5, 0.6]])

    def test_shape_checked(self):
        with pytest.raises(ValidationError):
            EmissionGrid(A, [[0.2, 0.3, 0.5]])

    def test_read_only(self):
        g = EmissionGrid(A, [[0.5, 0.5]])
        with pytest.raises(ValueError):
            g.probs[0, 0] = 1.0

    def test_file_round_trip(self, rng):
        g = random_grid(rng, 7, 5)
        buf = io.StringIO()
        write_grid(g, buf)
        buf.seek(0)
        back = read_grid(buf)
        assert back.alphabet == g.alphabet
        assert np.array_equal(back.probs, g.probs)

    def test_bad_header(self):
        with pytest.raises(ValidationError):
            read_grid(io.StringIO("0.5,0.5\n"))

    def test_body_mismatch(self):
        text = '#ctcgrid v1 blank=0 n=2 m=2 alphabet=["", "a"]\n0.5,0.5\n'
        with pytest.raises(ValidationError, match="shape"):
            read_grid(io.StringIO(text))


class TestCollapse:
    @pytest.mark.parametrize(
        "labels,expected",
        [([1, 1, 0, 1, 2], "aab"), ([0, 0, 0], ""), ([1, 0, 0, 1, 2, 2], "aab"), ([], "")],
    )
    def test_examples(self, labels, expected):
        assert ctc_collapse(labels, AB) == expected

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            ctc_collapse([3], AB)

    @given(st.lists(st.integers(0, 2), max_size=30))
    def test_idempotent_on_own_output(self, labels):
        text = ctc_collapse(labels, AB)
        # spelling the output with blanks between characters collapses back to it
        relabelled = [x for ch in text for x in (AB.index(ch), 0)]
        assert ctc_collapse(relabelled, AB) == text
        assert len(text) <= len(labels)


class TestGreedy:
    def test_blank_wins(self):
        r = greedy_decode(EmissionGrid(A, [[0.9, 0.1]]))
        assert r.text == "" and r.log_prob == pytest.approx(math.log(0.9))

    def test_repeats_merge(self):
        g = EmissionGrid(AB, [[0.1, 0.8, 0.1], [0.1, 0.7, 0.2], [0.1, 0.2, 0.7]])
        assert greedy_decode(g).text == "ab"

    def test_blank_separates(self):
        g = EmissionGrid(A, [[0.2, 0.8], [0.8, 0.2], [0.3, 0.7]])
        assert greedy_decode(g).text == "aa"

    def test_tie_takes_lowest_index(self):
        assert greedy_decode(EmissionGrid(A, [[0.5, 0.5]])).text == ""

    @given(st.text(alphabet="ab", max_size=20), st.integers(1, 3))
    def test_one_hot_inversion(self, text, repeat):
        assert greedy_decode(one_hot_grid(text, AB, repeat=repeat)).text == text


class TestExhaustive:
    def test_single_step(self):
        got = exhaustive_decode(EmissionGrid(A, [[0.6, 0.4]]), top_k=2)
        assert [r.text for r in got] == ["", "a"]
        assert [r.log_prob for r in got] == pytest.approx([math.log(0.6), math.log(0.4)])

    def test_two_steps_hand_enumerated(self):
        dist = exhaustive_distribution(EmissionGrid(A, [[0.5, 0.5], [0.5, 0.5]]))
        assert dist == pytest.approx({"": 0.25, "a": 0.75})

    def test_guard(self):
        g = EmissionGrid(A, np.full((24, 2), 0.5))
        with pytest.raises(SearchSpaceTooLarge):
            exhaustive_distribution(g)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_agrees_with_forward_algorithm(self, n, m, seed):
        g = random_grid(np.random.default_rng(seed), n, m)
        for text, p in exhaustive_distribution(g).items():
            assert p == pytest.approx(forward_prob(g, text), rel=1e-9, abs=1e-15)


class TestBeam:
    def test_two_step_matches_exhaustive(self):
        g = EmissionGrid(A, [[0.6, 0.4], [0.3, 0.7]])
        assert beam_search_decode(g, 8)[0].text == exhaustive_decode(g)[0].text == "a"

    def test_uniform_single_step_ties(self):
        g = EmissionGrid(AB, [[1 / 3] * 3])
        res = beam_search_decode(g, 4, top_k=3)
        assert len(res) == 3
        assert len({round(r.log_prob, 12) for r in res}) == 1

    def test_lm_weight_zero_is_lm_free(self, rng):
        lm = CharLM.uniform("ab", order=2)
        skewed = CharLM(2, {BOS: {"b": 50}}, 1.0, "ab")
        for _ in range(20):
            g = random_grid(rng, 6, 3)
            base = beam_search_decode(g, 4, top_k=4)
            assert beam_search_decode(g, 4, lm=lm, lm_weight=0.0, top_k=4) == base
            assert beam_search_decode(g, 4, lm=skewed, lm_weight=0.0, top_k=4) == base

    def test_lm_fusion_changes_choice(self):
        # acoustically "a" edges out "b"; a model that strongly prefers "b" first flips it
        g = EmissionGrid(AB, [[0.1, 0.46, 0.44]])
        lm = CharLM(2, {BOS: {"b": 100}}, 1.0, "ab")
        assert beam_search_decode(g, 4)[0].text == "a"
        assert beam_search_decode(g, 4, lm=lm, lm_weight=1.0)[0].text == "b"

    def test_wide_beam_scores_are_exact(self, rng):
        for _ in range(30):
            g = random_grid(rng, 4, 3)
            dist = exhaustive_distribution(g)
            for r in beam_search_decode(g, 200, top_k=10):
                assert r.log_prob == pytest.approx(math.log(dist[r.text]), rel=1e-9)

    def test_results_sorted_and_distinct(self, rng):
        g = random_grid(rng, 12, 6)
        res = beam_search_decode(g, 16, top_k=16)
        scores = [r.log_prob for r in res]
        assert scores == sorted(scores, reverse=True)
        assert len({r.text for r in res}) == len(res)

    @pytest.mark.parametrize("kwargs", [{"beam_width": 0}, {"top_k": 0}, {"beam_width": 2, "top_k": 3}, {"lm_weight": -1}])
    def test_argument_checks(self, kwargs):
        with pytest.raises(ValidationError):
            beam_search_decode(EmissionGrid(A, [[0.5, 0.5]]), **kwargs)

    def test_deterministic(self, rng):
        g = random_grid(rng, 15, 8)
        assert beam_search_decode(g, 8, top_k=8) == beam_search_decode(g, 8, top_k=8)


class TestHelpers:
    def test_one_hot_shape(self):
        g = one_hot_grid("ab", AB, repeat=2)
        assert g.n_steps == 6
        assert np.argmax(g.probs, axis=1).tolist() == [1, 1, 0, 2, 2, 0]

    def test_one_hot_soft(self):
        g = one_hot_grid("ab", AB, confidence=0.8)
        assert g.probs[0].tolist() == pytest.approx([0.1, 0.8, 0.1])

    def test_one_hot_confidence_check(self):
        with pytest.raises(ValidationError):
            one_hot_grid("a", AB, confidence=0.3)

    def test_concat_inserts_separator(self):
        alpha = Alphabet.from_chars(" ab")
        g = concat_grids([one_hot_grid("ab", alpha), one_hot_grid("ba", alpha)])
        assert greedy_decode(g).text == "ab ba"

    def test_concat_without_separator_keeps_repeats_apart(self):
        g = concat_grids([one_hot_grid("a", AB), one_hot_grid("a", AB)], separator=None)
        assert greedy_decode(g).text == "aa"

    def test_concat_alphabet_mismatch(self):
        with pytest.raises(ValidationError):
            concat_grids([one_hot_grid("a", A), one_hot_grid("a", AB)])
