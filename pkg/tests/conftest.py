from __future__ import annotations

import pytest

from icdgen.ontology import Note, Ontology, canonical_text, load_ontology, tokenize


def ingest_notes(notes, vocab) -> None:
    """Corpus-ingestion pass: extend the vocabulary with every note's words."""
    for note in notes:
        tokenize(canonical_text(note.text), vocab, extend=True)


@pytest.fixture
def diabetes_ontology() -> Ontology:
    return load_ontology(
        [
            ("250.0", "diabetes mellitus"),
            ("250.5", "diabetes insipidus"),
            ("285.1", "acute posthemorrhagic anemia"),
            ("280", "anemia"),
        ]
    )


@pytest.fixture
def simple_note() -> Note:
    return Note(note_id="n1", text="patient presents with anemia and diabetes mellitus")
