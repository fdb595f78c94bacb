"""Prompt construction for generation and cloze reranking.

Generative prefix prompt (encoder input):

    <note> . diagnoses and procedures : <c1> ; <c2> ; ... ; <ci> .

with the trailing separator list empty when nothing has been emitted yet:

    <note> . diagnoses and procedures :

Cloze rerank prompt:

    <note> . <c1> : [MASK] , <c2> : [MASK] , ... , <cN> : [MASK] .

Truncation applies to the note portion only; the template scaffold and the
code descriptions are never cut.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import TooManyCandidatesError
from .ontology import Note, Vocabulary, canonical_text, detokenize, tokenize

DEFAULT_MAX_INPUT_TOKENS = 8192
DEFAULT_MAX_CANDIDATES = 50

_SCAFFOLD_WORDS = ("diagnoses", "and", "procedures", ":")


@dataclass(frozen=True)
class GenPrompt:
    note_tokens: tuple[int, ...]
    emitted: tuple[str, ...]
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class ClozePrompt:
    note_tokens: tuple[int, ...]
    candidates: tuple[str, ...]
    tokens: tuple[int, ...]
    mask_positions: tuple[int, ...]


def _note_tokens(
    note: Note, vocab: Vocabulary, max_input_tokens: int, extend: bool
) -> tuple[int, ...]:
    toks = tokenize(canonical_text(note.text), vocab, extend=extend)
    return tuple(toks[:max_input_tokens])


def _scaffold_ids(vocab: Vocabulary) -> tuple[int, ...]:
    return tuple(vocab.id_of(w) for w in _SCAFFOLD_WORDS)


def build_gen_prompt(
    note: Note,
    emitted: Sequence[str],
    vocab: Vocabulary,
    *,
    max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS,
    extend: bool = False,
) -> GenPrompt:
    """Render the generative prefix prompt for a note and emitted descriptions."""
    note_toks = _note_tokens(note, vocab, max_input_tokens, extend)
    dot = vocab.id_of(".")
    tokens = list(note_toks)
    tokens.append(dot)
    tokens.extend(_scaffold_ids(vocab))
    emitted = tuple(emitted)
    for i, desc in enumerate(emitted):
        if i:
            tokens.append(vocab.sep_id)
        tokens.extend(tokenize(desc, vocab))
    if emitted:
        tokens.append(dot)
    return GenPrompt(note_tokens=note_toks, emitted=emitted, tokens=tuple(tokens))


def parse_gen_prompt(tokens: Sequence[int], vocab: Vocabulary) -> tuple[tuple[int, ...], tuple[str, ...]]:
    """Invert :func:`build_gen_prompt`: recover (note tokens, emitted descriptions).

    Splits at the last occurrence of the ". diagnoses and procedures :"
    scaffold, which makes the parse exact as long as no description embeds
    the scaffold itself.
    """
    dot = vocab.id_of(".")
    scaffold = (dot,) + _scaffold_ids(vocab)
    toks = tuple(tokens)
    start = -1
    for i in range(len(toks) - len(scaffold), -1, -1):
        if toks[i : i + len(scaffold)] == scaffold:
            start = i
            break
    if start < 0:
        raise ValueError("token sequence does not contain the prompt scaffold")
    note_toks = toks[:start]
    rest = toks[start + len(scaffold):]
    if not rest:
        return note_toks, ()
    if rest[-1] != dot:
        raise ValueError("emitted-description section does not end with '.'")
    rest = rest[:-1]
    groups: list[list[int]] = [[]]
    for tok in rest:
        if tok == vocab.sep_id:
            groups.append([])
        else:
            groups[-1].append(tok)
    if any(not g for g in groups):
        raise ValueError("empty description between separators")
    return note_toks, tuple(detokenize(g, vocab) for g in groups)


def build_cloze_prompt(
    note: Note,
    candidates: Sequence[str],
    vocab: Vocabulary,
    *,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
    max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS,
    extend: bool = False,
) -> ClozePrompt:
    """Render the cloze prompt with one [MASK] slot per candidate description."""
    candidates = tuple(candidates)
    if not candidates:
        raise ValueError("cloze prompt needs at least one candidate")
    if len(candidates) > max_candidates:
        raise TooManyCandidatesError(
            f"{len(candidates)} candidates exceed the limit of {max_candidates}"
        )
    note_toks = _note_tokens(note, vocab, max_input_tokens, extend)
    dot = vocab.id_of(".")
    comma = vocab.id_of(",")
    colon = vocab.id_of(":")
    tokens = list(note_toks)
    tokens.append(dot)
    positions: list[int] = []
    for i, desc in enumerate(candidates):
        if i:
            tokens.append(comma)
        tokens.extend(tokenize(desc, vocab))
        tokens.append(colon)
        positions.append(len(tokens))
        tokens.append(vocab.mask_id)
    tokens.append(dot)
    return ClozePrompt(
        note_tokens=note_toks,
        candidates=candidates,
        tokens=tuple(tokens),
        mask_positions=tuple(positions),
    )
