from __future__ import annotations

import json

import pytest

from amq.corpus import (
    CorpusError,
    Dictionary,
    PreferredTerm,
    load_dictionary,
    load_gold_set,
    save_dictionary,
    unreachable_gold_terms,
    validate_inputs,
)
from amq.textnorm import normalize

from helpers import levenshtein_oracle, write_dictionary_tsv, write_gold_json


class TestNormalize:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Hepatic failure", "hepatic failure"),
            ("hepatic   FAILURE", "hepatic failure"),
            ("  Drug-induced  liver injury ", "drug-induced liver injury"),
            ("Nausea, vomiting", "nausea vomiting"),
            ("A\tB", "a b"),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize(raw) == expected

    def test_idempotent(self):
        for raw in ("Hepatic failure", "A , B", "x-y  z"):
            assert normalize(normalize(raw)) == normalize(raw)


class TestLoadDictionary:
    def test_three_row_file(self, tmp_path):
        path = write_dictionary_tsv(
            tmp_path / "dict.tsv",
            [(30, "Gamma", ""), (10, "Alpha", "grp"), (20, "Beta", "")],
        )
        d = load_dictionary(path)
        assert [t.code for t in d] == [10, 20, 30]
        assert d.get(10).name == "Alpha"
        assert d.get(10).group == "grp"

    def test_duplicate_code_names_lines(self, tmp_path):
        path = write_dictionary_tsv(
            tmp_path / "dict.tsv", [(10012345, "Alpha", ""), (10012345, "Beta", "")]
        )
        with pytest.raises(CorpusError, match=r"3.*duplicate code 10012345.*line 2"):
            load_dictionary(path)

    def test_duplicate_normalized_name(self, tmp_path):
        path = write_dictionary_tsv(
            tmp_path / "dict.tsv", [(1, "Hepatic  Failure", ""), (2, "hepatic failure", "")]
        )
        with pytest.raises(CorpusError, match="duplicate normalized name"):
            load_dictionary(path)

    def test_header_only_is_valid_empty(self, tmp_path):
        path = tmp_path / "dict.tsv"
        path.write_text("code\tname\tgroup\n", encoding="utf-8")
        assert len(load_dictionary(path)) == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError, match="not found"):
            load_dictionary(tmp_path / "nope.tsv")

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "dict.tsv"
        path.write_text("code\tname\tgroup\n1\tAlpha\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=r":2: expected 3 columns"):
            load_dictionary(path)

    def test_non_integer_code(self, tmp_path):
        path = tmp_path / "dict.tsv"
        path.write_text("code\tname\tgroup\nxyz\tAlpha\t\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="non-integer code"):
            load_dictionary(path)

    def test_roundtrip_identical(self, tmp_path):
        path = write_dictionary_tsv(
            tmp_path / "dict.tsv",
            [(3, "Gamma ray", "g"), (1, "Alpha", ""), (2, "Beta-blocker", "b")],
        )
        d1 = load_dictionary(path)
        out = tmp_path / "copy.tsv"
        save_dictionary(d1, out)
        d2 = load_dictionary(out)
        assert d1.terms == d2.terms


class TestDictionaryInvariants:
    def test_iteration_sorted_by_code(self):
        d = Dictionary(terms=[PreferredTerm(5, "E"), PreferredTerm(1, "A"), PreferredTerm(3, "C")])
        assert d.codes() == [1, 3, 5]

    def test_programmatic_duplicates_rejected(self):
        with pytest.raises(CorpusError, match="duplicate code"):
            Dictionary(terms=[PreferredTerm(1, "A"), PreferredTerm(1, "B")])
        with pytest.raises(CorpusError, match="duplicate normalized name"):
            Dictionary(terms=[PreferredTerm(1, "A b"), PreferredTerm(2, "a  B")])


GOLD = [
    {
        "query_id": "SMQ001",
        "name": "Hepatic disorders",
        "input_terms": ["Hepatic failure"],
        "gold_terms": [
            {"code": 10012345, "scope": "narrow"},
            {"code": 10023456, "scope": "broad"},
        ],
    },
    {
        "query_id": "SMQ002",
        "name": "Hypoglycaemia",
        "input_terms": ["Hypoglycaemia", "Blood glucose decreased"],
        "gold_terms": [{"code": 10045678, "scope": "Narrow"}],
    },
]


class TestLoadGoldSet:
    def test_two_queries_no_warnings(self, tmp_path, small_dictionary):
        path = write_gold_json(tmp_path / "gold.json", GOLD)
        queries = load_gold_set(path, small_dictionary)
        assert [q.query_id for q in queries] == ["SMQ001", "SMQ002"]
        assert unreachable_gold_terms(queries, small_dictionary) == []

    def test_scope_case_insensitive(self, tmp_path, small_dictionary):
        path = write_gold_json(tmp_path / "gold.json", GOLD)
        queries = load_gold_set(path, small_dictionary)
        assert queries[1].gold_terms[0].scope == "narrow"

    def test_unreachable_code_warned_and_kept(self, tmp_path, small_dictionary, caplog):
        gold = json.loads(json.dumps(GOLD))
        gold[0]["gold_terms"].append({"code": 99999999, "scope": "broad"})
        path = write_gold_json(tmp_path / "gold.json", gold)
        with caplog.at_level("WARNING"):
            queries = load_gold_set(path, small_dictionary)
        assert 99999999 in queries[0].gold_codes()
        warnings = unreachable_gold_terms(queries, small_dictionary)
        assert warnings == [("SMQ001", 99999999)]
        assert "99999999" in caplog.text

    def test_invalid_scope(self, tmp_path, small_dictionary):
        gold = json.loads(json.dumps(GOLD))
        gold[0]["gold_terms"][0]["scope"] = "wide"
        path = write_gold_json(tmp_path / "gold.json", gold)
        with pytest.raises(CorpusError, match="invalid scope 'wide'"):
            load_gold_set(path, small_dictionary)

    def test_malformed_json(self, tmp_path, small_dictionary):
        path = tmp_path / "gold.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(CorpusError, match="malformed JSON"):
            load_gold_set(path, small_dictionary)

    def test_missing_field(self, tmp_path, small_dictionary):
        gold = [{"query_id": "X", "name": "x", "input_terms": ["a"]}]
        path = write_gold_json(tmp_path / "gold.json", gold)
        with pytest.raises(CorpusError, match="missing required field 'gold_terms'"):
            load_gold_set(path, small_dictionary)

    def test_empty_input_terms(self, tmp_path, small_dictionary):
        gold = json.loads(json.dumps(GOLD))
        gold[0]["input_terms"] = []
        path = write_gold_json(tmp_path / "gold.json", gold)
        with pytest.raises(CorpusError, match="non-empty list"):
            load_gold_set(path, small_dictionary)

    def test_duplicate_gold_code(self, tmp_path, small_dictionary):
        gold = json.loads(json.dumps(GOLD))
        gold[0]["gold_terms"].append({"code": 10012345, "scope": "broad"})
        path = write_gold_json(tmp_path / "gold.json", gold)
        with pytest.raises(CorpusError, match="duplicate gold code"):
            load_gold_set(path, small_dictionary)


class TestValidateInputs:
    def test_exact_pt_is_valid(self, tmp_path, small_dictionary):
        path = write_gold_json(tmp_path / "gold.json", GOLD)
        queries = load_gold_set(path, small_dictionary)
        checks = validate_inputs(queries[0], small_dictionary, lexical_cutoff=0.90)
        assert checks == [("Hepatic failure", True)]

    def test_gibberish_is_invalid(self, small_dictionary):
        # oracle: best normalized edit-distance ratio over all names
        probe = "qwzzkx"
        best = max(
            1 - levenshtein_oracle(probe, normalize(t.name)) / max(len(probe), len(normalize(t.name)))
            for t in small_dictionary
        )
        assert best < 0.90
        from amq.corpus import GoldQuery

        query = GoldQuery(query_id="X", name="x", input_terms=(probe,), gold_terms=())
        assert validate_inputs(query, small_dictionary, 0.90) == [(probe, False)]
