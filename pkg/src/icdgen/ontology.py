"""Code ontology: text normalization, surrogate tokenizer, vocabulary, and loading.

The tokenizer is a deterministic word/punctuation splitter, not a subword
model. Every stored description is kept in canonical form (lowercase tokens
joined by single spaces, punctuation isolated) so that
``detokenize(tokenize(description)) == description`` holds byte-exactly.
"""

from __future__ import annotations

import hashlib
import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import (
    DuplicateCodeError,
    DuplicateDescriptionError,
    EmptyDescriptionError,
    UnknownTokenError,
    VocabularyFrozenError,
)

# De-identification placeholders follow the MIMIC "[** ... **]" convention.
_DEID_RE = re.compile(r"\[\*\*.*?\*\*\]")
# Escaped-newline/tab artifacts ("/n", "\n" written out as two characters)
# left behind by note export tooling. Only treated as whitespace when not
# immediately followed by another alphanumeric, so "w/node" survives.
_ESCAPED_WS_RE = re.compile(r"[/\\][nt](?![A-Za-z0-9])")
# Anything that is not ASCII alphanumeric or punctuation becomes a space.
_NON_CONTENT_RE = re.compile(r"[^A-Za-z0-9" + re.escape(string.punctuation) + r"]")
_WS_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^\sA-Za-z0-9]")


def normalize_text(raw: str) -> str:
    """Normalize raw note/description text.

    Removes de-identification placeholders, maps escaped-newline artifacts
    and all non-alphanumeric non-punctuation characters to spaces, collapses
    whitespace runs, strips, and lowercases.
    """
    text = _DEID_RE.sub(" ", raw)
    text = _ESCAPED_WS_RE.sub(" ", text)
    text = _NON_CONTENT_RE.sub(" ", text)
    text = _WS_RE.sub(" ", text).strip()
    return text.lower()


def split_tokens(text: str) -> list[str]:
    """Split normalized text into word and standalone-punctuation tokens."""
    return _TOKEN_RE.findall(text)


def canonical_text(raw: str) -> str:
    """Normalize and re-join with isolated punctuation: the storage form."""
    return " ".join(split_tokens(normalize_text(raw)))


class Vocabulary:
    """Bijective token-string <-> dense-id mapping with reserved specials.

    Ids 0..5 are reserved for [PAD], [EOS], ";" (code separator), [MASK1],
    [MASK2], and [MASK]. A handful of template words ("diagnoses", "yes",
    "no", ...) are pre-seeded so prompt construction and cloze reranking
    never depend on them appearing in a loaded description.
    """

    PAD = "[PAD]"
    EOS = "[EOS]"
    SEP = ";"
    MASK1 = "[MASK1]"
    MASK2 = "[MASK2]"
    MASK = "[MASK]"

    _RESERVED = (PAD, EOS, SEP, MASK1, MASK2, MASK)
    _SEEDS = (".", ",", ":", "diagnoses", "and", "procedures", "yes", "no")

    def __init__(self) -> None:
        self._tokens: list[str] = []
        self._ids: dict[str, int] = {}
        self._frozen = False
        for tok in self._RESERVED + self._SEEDS:
            self._intern(tok)
        self.pad_id = self._ids[self.PAD]
        self.eos_id = self._ids[self.EOS]
        self.sep_id = self._ids[self.SEP]
        self.mask1_id = self._ids[self.MASK1]
        self.mask2_id = self._ids[self.MASK2]
        self.mask_id = self._ids[self.MASK]

    def _intern(self, token: str) -> int:
        existing = self._ids.get(token)
        if existing is not None:
            return existing
        idx = len(self._tokens)
        self._tokens.append(token)
        self._ids[token] = idx
        return idx

    def add(self, token: str) -> int:
        """Return the id for ``token``, assigning a new one if needed."""
        if token in self._ids:
            return self._ids[token]
        if self._frozen:
            raise VocabularyFrozenError(f"cannot add {token!r}: vocabulary is frozen")
        return self._intern(token)

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise UnknownTokenError(f"token {token!r} not in vocabulary") from None

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise UnknownTokenError(f"id {idx} not in vocabulary of size {len(self._tokens)}")
        return self._tokens[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "Vocabulary":
        self._frozen = True
        return self

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def digest(self) -> str:
        """Content digest of the id assignment, for persistence checks."""
        h = hashlib.sha256()
        for tok in self._tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        payload = {"format": "icdgen-vocab", "version": 1, "tokens": self._tokens}
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "icdgen-vocab" or payload.get("version") != 1:
            raise UnknownTokenError(f"{path}: not an icdgen vocabulary file")
        vocab = cls()
        expected = payload["tokens"]
        if expected[: len(vocab)] != list(vocab.tokens):
            raise UnknownTokenError(f"{path}: reserved token block does not match")
        for tok in expected[len(vocab):]:
            vocab._intern(tok)
        return vocab


def tokenize(text: str, vocab: Vocabulary, *, extend: bool = False) -> list[int]:
    """Map normalized text to token ids.

    With ``extend=True`` (corpus ingestion) unseen words are added to the
    vocabulary; with the default decode-side behavior they raise
    UnknownTokenError.
    """
    if extend:
        return [vocab.add(tok) for tok in split_tokens(text)]
    return [vocab.id_of(tok) for tok in split_tokens(text)]


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.token_of(i) for i in ids)


@dataclass(frozen=True)
class CodeEntry:
    """One code: identifier, canonical description, and its token ids."""

    code: str
    description: str
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class Note:
    """One input note with gold labels in expert priority order."""

    note_id: str
    text: str
    labels: tuple[str, ...] = ()
    sections: dict[str, tuple[int, int]] | None = field(default=None)

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"note {self.note_id!r} has duplicate gold labels")


class Ontology:
    """Immutable collection of code entries plus the vocabulary they use."""

    def __init__(self, entries: Sequence[CodeEntry], vocab: Vocabulary) -> None:
        self.entries: tuple[CodeEntry, ...] = tuple(entries)
        self.vocab = vocab
        self._by_code = {e.code: e for e in self.entries}
        self._by_description = {e.description: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CodeEntry]:
        return iter(self.entries)

    def __contains__(self, code: str) -> bool:
        return code in self._by_code

    def entry_for_code(self, code: str) -> CodeEntry:
        return self._by_code[code]

    def entry_for_description(self, description: str) -> CodeEntry:
        return self._by_description[description]

    def codes(self) -> tuple[str, ...]:
        return tuple(e.code for e in self.entries)


def load_ontology(rows: Iterable[tuple[str, str]], vocab: Vocabulary | None = None) -> Ontology:
    """Build an Ontology from (code, description) rows.

    Semicolons inside descriptions are replaced by commas before
    normalization so the ";" token stays reserved as the code separator.
    """
    vocab = vocab if vocab is not None else Vocabulary()
    entries: list[CodeEntry] = []
    seen_codes: set[str] = set()
    seen_descs: set[str] = set()
    for code, raw in rows:
        code = code.strip()
        if not code:
            raise DuplicateCodeError("empty code identifier")
        if code in seen_codes:
            raise DuplicateCodeError(f"duplicate code {code!r}")
        norm = normalize_text(raw.replace(";", ","))
        toks = tokenize(norm, vocab, extend=True)
        if not toks:
            raise EmptyDescriptionError(f"code {code!r} has an empty description")
        canonical = detokenize(toks, vocab)
        if canonical in seen_descs:
            raise DuplicateDescriptionError(
                f"code {code!r}: description {canonical!r} already present"
            )
        seen_codes.add(code)
        seen_descs.add(canonical)
        entries.append(CodeEntry(code=code, description=canonical, tokens=tuple(toks)))
    return Ontology(entries, vocab)
