from __future__ import annotations

import random
import string

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amq.lexical import LexicalError, best_lexical, levenshtein, lexical_ratio
from amq.textnorm import normalize

from helpers import levenshtein_oracle, make_dictionary

words = st.text(alphabet=string.ascii_lowercase + " -", min_size=1, max_size=20).filter(
    lambda s: normalize(s)
)


class TestLevenshtein:
    @pytest.mark.parametrize(
        "a,b,expected",
        [
            ("", "", 0),
            ("abc", "abc", 0),
            ("colour", "color", 1),
            ("abc", "xyz", 3),
            ("kitten", "sitting", 3),
            ("", "abc", 3),
        ],
    )
    def test_known_distances(self, a, b, expected):
        assert levenshtein(a, b) == expected
        assert levenshtein_oracle(a, b) == expected

    @given(st.text(max_size=12), st.text(max_size=12))
    def test_matches_full_matrix_oracle(self, a, b):
        assert levenshtein(a, b) == levenshtein_oracle(a, b)


class TestLexicalRatio:
    def test_normalization_collapses_case_and_whitespace(self):
        assert lexical_ratio("Hepatic failure", "hepatic   FAILURE") == 1.0

    def test_colour_color(self):
        # edit distance 1 per the DP oracle, max normalized length 6
        assert levenshtein_oracle("colour", "color") == 1
        assert lexical_ratio("colour", "color") == pytest.approx(1 - 1 / 6, abs=1e-12)

    def test_disjoint_strings(self):
        assert lexical_ratio("abc", "xyz") == 0.0

    def test_empty_after_normalization(self):
        with pytest.raises(LexicalError):
            lexical_ratio("!!!", "abc")
        with pytest.raises(LexicalError):
            lexical_ratio("abc", "   ")

    @given(words)
    def test_identity(self, a):
        assert lexical_ratio(a, a) == 1.0

    @given(words, words)
    def test_symmetry(self, a, b):
        assert lexical_ratio(a, b) == lexical_ratio(b, a)

    @given(words, words)
    def test_score_one_iff_normalized_equal(self, a, b):
        score = lexical_ratio(a, b)
        assert 0.0 <= score <= 1.0
        assert (score == 1.0) == (normalize(a) == normalize(b))


class TestBestLexical:
    def test_exact_name_wins_with_score_one(self, small_dictionary):
        match = best_lexical("hepatic  FAILURE", small_dictionary)
        assert match.code == 10012345
        assert match.score == 1.0

    def test_tie_breaks_to_lowest_code(self):
        d = make_dictionary(["abcd", "abce"])  # both at distance 1 from "abcf"
        match = best_lexical("abcf", d)
        assert match.code == d.codes()[0]
        assert match.score == pytest.approx(0.75)

    def test_row_order_invariance(self):
        from amq.corpus import Dictionary, PreferredTerm

        t1 = [PreferredTerm(2, "abce"), PreferredTerm(1, "abcd")]
        t2 = [PreferredTerm(1, "abcd"), PreferredTerm(2, "abce")]
        assert best_lexical("abcf", Dictionary(terms=t1)) == best_lexical(
            "abcf", Dictionary(terms=t2)
        )

    def test_matches_exhaustive_oracle_on_random_dictionary(self):
        rng = random.Random(404)
        names = set()
        while len(names) < 50:
            names.add(
                " ".join(
                    "".join(rng.choices(string.ascii_lowercase, k=rng.randint(3, 9)))
                    for _ in range(rng.randint(1, 3))
                )
            )
        d = make_dictionary(sorted(names))
        for _ in range(25):
            query = "".join(rng.choices(string.ascii_lowercase + " ", k=rng.randint(3, 14)))
            if not normalize(query):
                continue
            # oracle: exhaustive scan, max ratio then lowest code
            best_score, best_code = None, None
            for t in d:
                nn, nq = normalize(t.name), normalize(query)
                ratio = 1 - levenshtein_oracle(nq, nn) / max(len(nq), len(nn))
                if best_score is None or ratio > best_score:
                    best_score, best_code = ratio, t.code
            match = best_lexical(query, d)
            assert match.code == best_code
            assert match.score == pytest.approx(best_score, abs=1e-12)

    def test_empty_query_raises(self, small_dictionary):
        with pytest.raises(LexicalError):
            best_lexical("  ", small_dictionary)
