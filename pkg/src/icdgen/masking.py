"""Pretraining pair preparation from SOAP-sectioned notes.

Assessment/plan sentences that carry a gazetteer entity become generation
targets: each is replaced by a single [MASK1] token in the input and its
tokens are concatenated (in order) as the target. Subjective/objective
sections get span-level [MASK2] masking: contiguous spans of 1-3 tokens
(truncated-geometric lengths, p = 0.5) are each collapsed to one [MASK2]
until roughly ``mlm_rate`` of the S/O tokens are covered.

Masking is deterministic for a fixed seed: each note draws from its own
generator seeded by sha256(note_id) XOR the global seed, so batch order and
parallelism cannot change the output.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import NoMaskableSentenceError
from .fewshot import Gazetteer
from .ontology import Note, Vocabulary, canonical_text, tokenize

SECTION_NAMES = ("subjective", "objective", "assessment", "plan")
_SO_SECTIONS = frozenset({"subjective", "objective"})
_AP_SECTIONS = frozenset({"assessment", "plan"})

# Sentence boundary: terminal punctuation followed by whitespace and an
# uppercase letter or digit; applied to raw text before normalization.
_SENT_BOUNDARY_RE = re.compile(r"[.!?](?=\s+[A-Z0-9])")


def segment_sentences(text: str, start: int, end: int) -> list[tuple[int, int]]:
    """Character spans of sentences inside text[start:end]."""
    spans: list[tuple[int, int]] = []
    cursor = start
    for m in _SENT_BOUNDARY_RE.finditer(text, start, end):
        spans.append((cursor, m.end()))
        cursor = m.end()
    if cursor < end:
        spans.append((cursor, end))
    return spans


@dataclass(frozen=True)
class SoapNote:
    """A note with non-overlapping section spans and per-section sentences."""

    note_id: str
    text: str
    sections: dict[str, tuple[int, int]]
    sentences: dict[str, list[tuple[int, int]]]

    @classmethod
    def from_note(cls, note: Note) -> "SoapNote":
        if not note.sections:
            raise ValueError(f"note {note.note_id!r} has no section annotations")
        sections: dict[str, tuple[int, int]] = {}
        for name, (s, e) in note.sections.items():
            if name not in SECTION_NAMES:
                raise ValueError(f"unknown section {name!r}")
            if not 0 <= s <= e <= len(note.text):
                raise ValueError(f"section {name!r} span out of range")
            sections[name] = (s, e)
        spans = sorted(sections.values())
        for (_, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError(f"note {note.note_id!r} has overlapping sections")
        sentences = {
            name: segment_sentences(note.text, s, e) for name, (s, e) in sections.items()
        }
        return cls(note_id=note.note_id, text=note.text, sections=sections, sentences=sentences)

    def ordered_sections(self) -> list[str]:
        return sorted(self.sections, key=lambda n: self.sections[n])


@dataclass(frozen=True)
class PretrainPair:
    """One input/target pair plus the material needed to undo the masking."""

    note_id: str
    seed: int
    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    masked_sentences: tuple[tuple[int, ...], ...]
    masked_spans: tuple[tuple[int, ...], ...]


def _note_rng(note_id: str, seed: int) -> random.Random:
    h = int.from_bytes(hashlib.sha256(note_id.encode("utf-8")).digest()[:8], "little")
    return random.Random(h ^ seed)


def _span_length(rng: random.Random) -> int:
    # Geometric(p=0.5) truncated to {1, 2, 3}: weights 4:2:1.
    return rng.choices((1, 2, 3), weights=(4, 2, 1))[0]


def _sentence_tokens(
    note: SoapNote, section: str, vocab: Vocabulary
) -> list[tuple[int, ...]]:
    out = []
    for s, e in note.sentences[section]:
        toks = tokenize(canonical_text(note.text[s:e]), vocab, extend=True)
        out.append(tuple(toks))
    return out


def make_pretrain_pair(
    note: SoapNote,
    gazetteer: Gazetteer,
    vocab: Vocabulary,
    seed: int = 0,
    mlm_rate: float = 0.15,
) -> PretrainPair:
    """Build one masked input/target pair; deterministic for a fixed seed."""
    if not 0.0 <= mlm_rate < 1.0:
        raise ValueError("mlm_rate must be in [0, 1)")
    ap_names = [n for n in note.ordered_sections() if n in _AP_SECTIONS]
    if not any(note.sentences.get(n) for n in ap_names):
        raise NoMaskableSentenceError(f"note {note.note_id!r} has an empty assessment/plan")

    entity_phrases = [canonical_text(p) for phrases in gazetteer.values() for p in phrases]
    entity_phrases = [p for p in entity_phrases if p]
    rng = _note_rng(note.note_id, seed)

    # Tokenize every sentence of every section up front, in note order.
    section_tokens: dict[str, list[tuple[int, ...]]] = {
        name: _sentence_tokens(note, name, vocab) for name in note.ordered_sections()
    }

    # GSG selection: AP sentences carrying at least one entity phrase.
    gsg_selected: dict[str, list[bool]] = {}
    any_selected = False
    for name in ap_names:
        flags = []
        for s, e in note.sentences[name]:
            sent = canonical_text(note.text[s:e])
            hit = any(p in sent for p in entity_phrases)
            flags.append(hit and bool(sent))
        gsg_selected[name] = flags
        any_selected = any_selected or any(flags)
    if not any_selected:
        raise NoMaskableSentenceError(
            f"note {note.note_id!r}: no assessment/plan sentence carries a gazetteer entity"
        )

    # MLM span sampling over the combined S/O token stream. Positions are
    # (section, sentence index, token index); spans stay within one sentence.
    so_names = [n for n in note.ordered_sections() if n in _SO_SECTIONS]
    positions: list[tuple[str, int, int]] = []
    for name in so_names:
        for si, toks in enumerate(section_tokens[name]):
            positions.extend((name, si, ti) for ti in range(len(toks)))
    n_so = len(positions)
    target_cover = round(mlm_rate * n_so)
    masked_pos: set[tuple[str, int, int]] = set()
    if target_cover > 0:
        starts = list(positions)
        rng.shuffle(starts)
        covered = 0
        for name, si, ti in starts:
            if covered >= target_cover:
                break
            if (name, si, ti) in masked_pos:
                continue
            sent_len = len(section_tokens[name][si])
            length = min(_span_length(rng), sent_len - ti)
            for off in range(1, length):
                if (name, si, ti + off) in masked_pos:
                    length = off
                    break
            for off in range(length):
                masked_pos.add((name, si, ti + off))
            covered += length

    # Assemble input/target walking sections in note order.
    input_ids: list[int] = []
    target_ids: list[int] = []
    masked_sentences: list[tuple[int, ...]] = []
    masked_spans: list[tuple[int, ...]] = []
    for name in note.ordered_sections():
        sents = section_tokens[name]
        if name in _AP_SECTIONS:
            flags = gsg_selected[name]
            for toks, selected in zip(sents, flags):
                if selected:
                    input_ids.append(vocab.mask1_id)
                    target_ids.extend(toks)
                    masked_sentences.append(toks)
                else:
                    input_ids.extend(toks)
        else:
            for si, toks in enumerate(sents):
                ti = 0
                while ti < len(toks):
                    if (name, si, ti) in masked_pos:
                        span = [toks[ti]]
                        ti += 1
                        while ti < len(toks) and (name, si, ti) in masked_pos:
                            span.append(toks[ti])
                            ti += 1
                        input_ids.append(vocab.mask2_id)
                        masked_spans.append(tuple(span))
                    else:
                        input_ids.append(toks[ti])
                        ti += 1

    return PretrainPair(
        note_id=note.note_id,
        seed=seed,
        input_ids=tuple(input_ids),
        target_ids=tuple(target_ids),
        masked_sentences=tuple(masked_sentences),
        masked_spans=tuple(masked_spans),
    )


def original_tokens(note: SoapNote, vocab: Vocabulary) -> tuple[int, ...]:
    """Token sequence of the whole note: sections in order, sentence by sentence."""
    out: list[int] = []
    for name in note.ordered_sections():
        for toks in _sentence_tokens(note, name, vocab):
            out.extend(toks)
    return tuple(out)


def reconstruct_tokens(pair: PretrainPair, vocab: Vocabulary) -> tuple[int, ...]:
    """Substitute masked sentences and spans back into the input."""
    out: list[int] = []
    sent_iter = iter(pair.masked_sentences)
    span_iter = iter(pair.masked_spans)
    for tok in pair.input_ids:
        if tok == vocab.mask1_id:
            out.extend(next(sent_iter))
        elif tok == vocab.mask2_id:
            out.extend(next(span_iter))
        else:
            out.append(tok)
    return tuple(out)


def mlm_coverage(pair: PretrainPair, note: SoapNote, vocab: Vocabulary) -> float:
    """Fraction of S/O tokens covered by [MASK2] spans."""
    n_so = 0
    for name in note.ordered_sections():
        if name in _SO_SECTIONS:
            for toks in _sentence_tokens(note, name, vocab):
                n_so += len(toks)
    masked = sum(len(s) for s in pair.masked_spans)
    return masked / n_so if n_so else 0.0
