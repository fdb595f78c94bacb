from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from icdgen.errors import TooManyCandidatesError
from icdgen.ontology import Note, Vocabulary, detokenize, load_ontology
from icdgen.prompts import build_cloze_prompt, build_gen_prompt, parse_gen_prompt

from conftest import ingest_notes


def rendered(prompt_tokens, vocab) -> str:
    return detokenize(prompt_tokens, vocab)


@pytest.fixture
def ontology():
    return load_ontology([("280", "anemia"), ("1", "chest pain"), ("2", "chronic renal failure")])


class TestGenPrompt:
    def test_empty_emitted(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_gen_prompt(note, [], ontology.vocab)
        assert rendered(prompt.tokens, ontology.vocab) == "chest pain . diagnoses and procedures :"

    def test_one_emitted(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_gen_prompt(note, ["anemia"], ontology.vocab)
        assert (
            rendered(prompt.tokens, ontology.vocab)
            == "chest pain . diagnoses and procedures : anemia ."
        )

    def test_two_emitted_joined_by_separator(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_gen_prompt(note, ["anemia", "chronic renal failure"], ontology.vocab)
        assert (
            rendered(prompt.tokens, ontology.vocab)
            == "chest pain . diagnoses and procedures : anemia ; chronic renal failure ."
        )

    def test_truncation_applies_to_note_only(self, ontology):
        vocab = ontology.vocab
        note = Note("n", " ".join(["anemia"] * 10_000))
        prompt = build_gen_prompt(note, ["chest pain"], vocab, extend=True)
        assert len(prompt.note_tokens) == 8192
        # Scaffold (". diagnoses and procedures :") and the emitted code survive.
        assert rendered(prompt.tokens[-8:], vocab) == ". diagnoses and procedures : chest pain ."

    def test_roundtrip_empty(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_gen_prompt(note, [], ontology.vocab)
        note_toks, emitted = parse_gen_prompt(prompt.tokens, ontology.vocab)
        assert note_toks == prompt.note_tokens
        assert emitted == ()

    def test_roundtrip_with_emitted(self, ontology):
        note = Note("n", "chest pain and more chest pain")
        descs = ("anemia", "chronic renal failure")
        prompt = build_gen_prompt(note, descs, ontology.vocab, extend=True)
        note_toks, emitted = parse_gen_prompt(prompt.tokens, ontology.vocab)
        assert note_toks == prompt.note_tokens
        assert emitted == descs

    def test_roundtrip_note_containing_scaffold(self, ontology):
        # Parsing anchors on the last scaffold occurrence, so a note that
        # quotes the scaffold still parses.
        note = Note("n", "history . diagnoses and procedures : none noted")
        prompt = build_gen_prompt(note, ["anemia"], ontology.vocab, extend=True)
        note_toks, emitted = parse_gen_prompt(prompt.tokens, ontology.vocab)
        assert note_toks == prompt.note_tokens
        assert emitted == ("anemia",)


class TestClozePrompt:
    def test_two_candidates(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_cloze_prompt(note, ["anemia", "chest pain"], ontology.vocab)
        assert (
            rendered(prompt.tokens, ontology.vocab)
            == "chest pain . anemia : [MASK] , chest pain : [MASK] ."
        )
        assert len(prompt.mask_positions) == 2

    def test_single_candidate_degenerate(self, ontology):
        note = Note("n", "chest pain")
        prompt = build_cloze_prompt(note, ["anemia"], ontology.vocab)
        assert rendered(prompt.tokens, ontology.vocab) == "chest pain . anemia : [MASK] ."

    def test_fifty_candidates_positions_increase(self):
        rows = [(str(i), f"finding number {i}") for i in range(50)]
        ont = load_ontology(rows)
        note = Note("n", "finding")
        prompt = build_cloze_prompt(note, [e.description for e in ont], ont.vocab)
        assert len(prompt.mask_positions) == 50
        assert list(prompt.mask_positions) == sorted(set(prompt.mask_positions))
        mask_id = ont.vocab.mask_id
        assert sum(1 for t in prompt.tokens if t == mask_id) == 50
        for pos in prompt.mask_positions:
            assert prompt.tokens[pos] == mask_id

    def test_too_many_candidates(self):
        rows = [(str(i), f"finding number {i}") for i in range(51)]
        ont = load_ontology(rows)
        note = Note("n", "finding")
        with pytest.raises(TooManyCandidatesError):
            build_cloze_prompt(note, [e.description for e in ont], ont.vocab)

    def test_empty_candidates_rejected(self, ontology):
        with pytest.raises(ValueError):
            build_cloze_prompt(Note("n", "x"), [], ontology.vocab, extend=True)


@settings(max_examples=50, deadline=None)
@given(
    note_words=st.lists(st.sampled_from(["fever", "cough", "stable", "pain"]), max_size=12),
    emitted_idx=st.lists(st.integers(min_value=0, max_value=2), max_size=3, unique=True),
)
def test_gen_prompt_roundtrip_property(note_words, emitted_idx):
    ont = load_ontology([("280", "anemia"), ("1", "chest pain"), ("2", "chronic renal failure")])
    note = Note("n", " ".join(note_words))
    ingest_notes([note], ont.vocab)
    descs = tuple(ont.entries[i].description for i in emitted_idx)
    prompt = build_gen_prompt(note, descs, ont.vocab)
    note_toks, emitted = parse_gen_prompt(prompt.tokens, ont.vocab)
    assert note_toks == prompt.note_tokens
    assert emitted == descs
