"""Readers and writers for the on-disk formats.

Ontology: UTF-8 TSV, ``code<TAB>description``, no header.
Notes: JSON-lines with ``id``, ``text``, ``labels``, optional ``sections``
(mapping section name to [start, end) character offsets).
Predictions: JSON-lines with ``id``, ``codes``, ``scores``, ``natural_eos``.
Gazetteer: TSV ``code<TAB>phrase``, repeated codes allowed.
Pretrain pairs: JSON-lines with ``input_tokens``, ``target_tokens``,
``note_id``, ``seed``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from .decoder import PredictionSet
from .masking import PretrainPair
from .ontology import Note, Ontology


def read_ontology_tsv(path: str | Path) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'code<TAB>description'")
            rows.append((parts[0], parts[1]))
    return rows


def write_ontology_tsv(rows: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for code, desc in rows:
            fh.write(f"{code}\t{desc}\n")


def ontology_digest(path: str | Path) -> bytes:
    """sha256 of the raw TSV bytes; keys the trie cache."""
    return hashlib.sha256(Path(path).read_bytes()).digest()


def read_notes_jsonl(path: str | Path, ontology: Ontology | None = None) -> list[Note]:
    notes: list[Note] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            sections = None
            if obj.get("sections") is not None:
                sections = {name: (int(s), int(e)) for name, (s, e) in obj["sections"].items()}
            note = Note(
                note_id=str(obj["id"]),
                text=obj["text"],
                labels=tuple(obj.get("labels", ())),
                sections=sections,
            )
            if ontology is not None:
                unknown = [c for c in note.labels if c not in ontology]
                if unknown:
                    raise ValueError(f"{path}:{lineno}: unknown gold codes {unknown}")
            notes.append(note)
    return notes


def write_notes_jsonl(notes: Iterable[Note], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for note in notes:
            obj: dict = {"id": note.note_id, "text": note.text, "labels": list(note.labels)}
            if note.sections is not None:
                obj["sections"] = {k: list(v) for k, v in note.sections.items()}
            fh.write(json.dumps(obj) + "\n")


def read_predictions_jsonl(path: str | Path) -> list[PredictionSet]:
    preds: list[PredictionSet] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            scores = obj.get("scores")
            preds.append(
                PredictionSet(
                    note_id=str(obj["id"]),
                    codes=tuple(obj["codes"]),
                    scores=None if scores is None else tuple(float(s) for s in scores),
                    terminated_naturally=bool(obj.get("natural_eos", True)),
                )
            )
    return preds


def write_predictions_jsonl(preds: Iterable[PredictionSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            obj = {
                "id": p.note_id,
                "codes": list(p.codes),
                "scores": None if p.scores is None else list(p.scores),
                "natural_eos": p.terminated_naturally,
            }
            fh.write(json.dumps(obj) + "\n")


def read_gazetteer_tsv(path: str | Path) -> dict[str, list[str]]:
    gaz: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'code<TAB>phrase'")
            gaz.setdefault(parts[0], []).append(parts[1])
    return gaz


def write_gazetteer_tsv(gazetteer: dict[str, Sequence[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for code, phrases in gazetteer.items():
            for phrase in phrases:
                fh.write(f"{code}\t{phrase}\n")


def read_code_list(path: str | Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def write_code_list(codes: Iterable[str], path: str | Path) -> None:
    Path(path).write_text("".join(f"{c}\n" for c in codes), encoding="utf-8")


def write_pretrain_pairs_jsonl(pairs: Iterable[PretrainPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            obj = {
                "input_tokens": list(pair.input_ids),
                "target_tokens": list(pair.target_ids),
                "note_id": pair.note_id,
                "seed": pair.seed,
            }
            fh.write(json.dumps(obj) + "\n")
