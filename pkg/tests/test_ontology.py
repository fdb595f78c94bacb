from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from icdgen.errors import (
    DuplicateCodeError,
    DuplicateDescriptionError,
    EmptyDescriptionError,
    UnknownTokenError,
    VocabularyFrozenError,
)
from icdgen.ontology import (
    Note,
    Vocabulary,
    canonical_text,
    detokenize,
    load_ontology,
    normalize_text,
    split_tokens,
    tokenize,
)
from icdgen.synthetic import make_ontology_rows


class TestNormalizeText:
    def test_deid_and_escape_artifacts_removed(self):
        # De-id bracket token dropped, "/n" export artifact mapped to space,
        # whitespace collapsed, lowercased.
        assert normalize_text("Chest X/n ray [**2151-7-16**]") == "chest x ray"

    def test_empty_is_fixed_point(self):
        assert normalize_text("") == ""

    def test_normal_text_is_fixed_point(self):
        assert normalize_text("anemia") == "anemia"

    def test_non_content_characters_become_spaces(self):
        assert normalize_text("fever\t38°C\nand chills") == "fever 38 c and chills"

    def test_punctuation_is_kept(self):
        assert normalize_text("Type 1, juvenile") == "type 1, juvenile"

    def test_slash_inside_word_survives(self):
        assert normalize_text("w/node") == "w/node"


class TestTokenize:
    def test_three_words(self):
        vocab = Vocabulary()
        ids = tokenize("diabetes with ketoacidosis", vocab, extend=True)
        assert len(ids) == 3
        assert detokenize(ids, vocab) == "diabetes with ketoacidosis"

    def test_punctuation_becomes_standalone_tokens(self):
        vocab = Vocabulary()
        ids = tokenize("type 1 , juvenile", vocab, extend=True)
        assert len(ids) == 4
        assert vocab.token_of(ids[2]) == ","

    def test_unknown_token_in_decode_mode(self):
        vocab = Vocabulary()
        with pytest.raises(UnknownTokenError):
            tokenize("ketoacidosis", vocab)

    def test_frozen_vocab_rejects_extension(self):
        vocab = Vocabulary()
        vocab.freeze()
        with pytest.raises(VocabularyFrozenError):
            tokenize("ketoacidosis", vocab, extend=True)

    def test_seed_tokens_survive_freezing(self):
        vocab = Vocabulary()
        vocab.freeze()
        assert tokenize("diagnoses and procedures : yes , no .", vocab)


class TestVocabulary:
    def test_reserved_ids_distinct(self):
        vocab = Vocabulary()
        reserved = {vocab.pad_id, vocab.eos_id, vocab.sep_id, vocab.mask1_id, vocab.mask2_id, vocab.mask_id}
        assert len(reserved) == 6

    def test_bijection(self):
        vocab = Vocabulary()
        for w in ("alpha", "beta", "gamma"):
            vocab.add(w)
        for i in range(len(vocab)):
            assert vocab.id_of(vocab.token_of(i)) == i

    def test_add_is_idempotent(self):
        vocab = Vocabulary()
        assert vocab.add("alpha") == vocab.add("alpha")

    def test_digest_tracks_content(self):
        a, b = Vocabulary(), Vocabulary()
        assert a.digest() == b.digest()
        a.add("alpha")
        assert a.digest() != b.digest()

    def test_save_load_roundtrip(self, tmp_path):
        vocab = Vocabulary()
        vocab.add("alpha")
        vocab.add("beta")
        path = tmp_path / "vocab.json"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.tokens == vocab.tokens
        assert loaded.digest() == vocab.digest()


class TestLoadOntology:
    def test_simple_row(self):
        ont = load_ontology([("250.1", "Diabetes with ketoacidosis")])
        entry = ont.entry_for_code("250.1")
        assert entry.description == "diabetes with ketoacidosis"
        assert len(entry.tokens) == 3

    def test_semicolons_become_commas(self):
        ont = load_ontology([("1", "A; B")])
        assert ont.entry_for_code("1").description == "a , b"

    def test_duplicate_code_rejected(self):
        with pytest.raises(DuplicateCodeError):
            load_ontology([("1", "anemia"), ("1", "sepsis")])

    def test_duplicate_description_rejected(self):
        with pytest.raises(DuplicateDescriptionError):
            load_ontology([("1", "Anemia"), ("2", "anemia")])

    def test_empty_description_rejected(self):
        with pytest.raises(EmptyDescriptionError):
            load_ontology([("1", "  ")])

    def test_lookup_total_over_entries(self, diabetes_ontology):
        for entry in diabetes_ontology:
            assert diabetes_ontology.entry_for_code(entry.code) is entry
            assert diabetes_ontology.entry_for_description(entry.description) is entry

    def test_load_is_deterministic(self):
        rows = make_ontology_rows(100, seed=3)
        a = load_ontology(rows)
        b = load_ontology(rows)
        assert a.vocab.tokens == b.vocab.tokens
        assert [e.tokens for e in a] == [e.tokens for e in b]

    def test_description_roundtrip_over_synthetic_ontology(self):
        ont = load_ontology(make_ontology_rows(300, seed=5))
        for entry in ont:
            assert detokenize(entry.tokens, ont.vocab) == entry.description
            assert tuple(tokenize(entry.description, ont.vocab)) == entry.tokens

    def test_no_entry_contains_separator_or_eos(self):
        ont = load_ontology([("1", "a;b"), ("2", "c ; d"), ("3", "plain words")])
        for entry in ont:
            assert ont.vocab.sep_id not in entry.tokens
            assert ont.vocab.eos_id not in entry.tokens


@given(st.text(max_size=200))
def test_normalize_is_idempotent(raw):
    once = normalize_text(raw)
    assert normalize_text(once) == once


@given(st.text(max_size=200))
def test_canonical_text_roundtrips_through_vocab(raw):
    vocab = Vocabulary()
    canon = canonical_text(raw)
    ids = tokenize(canon, vocab, extend=True)
    assert detokenize(ids, vocab) == canon
    assert split_tokens(canon) == [vocab.token_of(i) for i in ids]


def test_note_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        Note(note_id="n", text="x", labels=("1", "1"))
