"""Deterministic synthetic corpora for tests, benchmarks, and the demo CLI.

The generated world is small but structurally faithful: codes have unique
multi-word descriptions, notes carry gold labels in priority order with a
skewed (long-tail) popularity profile, most gold codes are mentioned
verbatim somewhere in the note text, and SOAP notes have section spans
with sentence structure the masking pipeline can segment.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .ontology import Note

WORD_BANK = (
    "acute chronic severe mild moderate recurrent primary secondary benign malignant "
    "anemia diabetes hypertension pneumonia sepsis asthma arthritis dermatitis colitis nephritis "
    "renal hepatic cardiac pulmonary gastric neural vascular biliary thyroid adrenal "
    "failure infection obstruction inflammation hemorrhage embolism stenosis fibrosis edema lesion "
    "type grade stage onset unspecified juvenile adult senile congenital acquired "
    "left right bilateral upper lower distal proximal anterior posterior lateral "
    "catheterization ventilation dialysis transfusion resection bypass drainage biopsy imaging screening "
    "fracture sprain contusion laceration burn ulcer abscess cyst polyp tumor "
    "disorder disease syndrome deficiency toxicity dependence withdrawal overdose reaction complication "
    "ketoacidosis mellitus insipidus bronchitis thrombosis migraine vertigo syncope seizure delirium "
    "with without mention of due to following unresolved persistent progressive"
).split()

_FILLER = (
    "patient reports stable vitals and tolerates diet . "
    "labs reviewed and trends discussed with team . "
    "continue current management and monitor closely . "
    "follow up arranged after discharge ."
).split()


def make_ontology_rows(n_codes: int, seed: int = 0) -> list[tuple[str, str]]:
    """(code, description) rows with unique multi-word descriptions."""
    rng = random.Random(seed)
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    i = 0
    while len(rows) < n_codes:
        n_words = rng.randint(2, 5)
        desc = " ".join(rng.sample(WORD_BANK, n_words))
        if desc in seen:
            continue
        seen.add(desc)
        code = f"{100 + i // 10}.{i % 10}"
        rows.append((code, desc))
        i += 1
    return rows


@dataclass(frozen=True)
class SyntheticCorpus:
    ontology_rows: tuple[tuple[str, str], ...]
    train: tuple[Note, ...]
    test: tuple[Note, ...]
    gazetteer: dict[str, list[str]]


def _popularity_weights(n_codes: int) -> list[float]:
    # A steep head and a long tail: a few codes dominate gold sets.
    return [30.0 if i < 3 else 8.0 if i < 8 else 2.0 if i < 15 else 1.0 for i in range(n_codes)]


def _weighted_sample(rng: random.Random, items: list[str], weights: list[float], k: int) -> list[str]:
    chosen: list[str] = []
    pool = list(range(len(items)))
    w = list(weights)
    for _ in range(min(k, len(items))):
        total = sum(w[i] for i in pool)
        r = rng.random() * total
        acc = 0.0
        for j, i in enumerate(pool):
            acc += w[i]
            if r <= acc:
                chosen.append(items[i])
                pool.pop(j)
                break
    return chosen


def make_corpus(
    n_notes: int = 200,
    n_codes: int = 30,
    seed: int = 7,
    train_fraction: float = 0.75,
    mention_rate: float = 0.8,
) -> SyntheticCorpus:
    """Corpus with a planted note -> codes mapping and priority-ordered labels."""
    rng = random.Random(seed)
    rows = make_ontology_rows(n_codes, seed=seed)
    codes = [c for c, _ in rows]
    desc_of = dict(rows)
    weights = _popularity_weights(n_codes)
    rank = {c: i for i, c in enumerate(codes)}

    notes: list[Note] = []
    for i in range(n_notes):
        k = rng.randint(2, 6)
        labels = _weighted_sample(rng, codes, weights, k)
        labels.sort(key=lambda c: rank[c])  # expert priority: popular first
        sentences: list[str] = []
        sentences.append("Admission note [**2151-7-16**] for inpatient stay.")
        for code in labels:
            if rng.random() < mention_rate:
                sentences.append(f"Assessment notes {desc_of[code]}.")
            filler = " ".join(rng.choices(_FILLER, k=rng.randint(4, 8)))
            sentences.append(filler.capitalize() + ".")
        text = " ".join(sentences)
        notes.append(Note(note_id=f"note-{i:04d}", text=text, labels=tuple(labels)))

    n_train = int(n_notes * train_fraction)
    gazetteer = {c: [d] for c, d in rows}
    return SyntheticCorpus(
        ontology_rows=tuple(rows),
        train=tuple(notes[:n_train]),
        test=tuple(notes[n_train:]),
        gazetteer=gazetteer,
    )


def make_soap_corpus(
    n_notes: int = 500, n_codes: int = 20, seed: int = 11
) -> tuple[list[Note], dict[str, list[str]]]:
    """SOAP-sectioned notes with entity-bearing assessment/plan sentences."""
    rng = random.Random(seed)
    rows = make_ontology_rows(n_codes, seed=seed)
    gazetteer = {c: [d] for c, d in rows}
    descriptions = [d for _, d in rows]

    def sentence(min_words: int = 6, max_words: int = 12) -> str:
        words = rng.choices(WORD_BANK, k=rng.randint(min_words, max_words))
        return (" ".join(words)).capitalize() + "."

    def entity_sentence() -> str:
        desc = rng.choice(descriptions)
        lead = rng.choice(["Assessment suggests", "Plan addresses", "Findings consistent with"])
        return f"{lead} {desc}."

    notes: list[Note] = []
    for i in range(n_notes):
        parts: dict[str, str] = {}
        parts["subjective"] = " ".join(sentence() for _ in range(rng.randint(6, 12)))
        parts["objective"] = " ".join(sentence() for _ in range(rng.randint(6, 12)))
        ap_a = [entity_sentence()]
        ap_a.extend(sentence() for _ in range(rng.randint(1, 3)))
        rng.shuffle(ap_a)
        parts["assessment"] = " ".join(ap_a)
        ap_p = [entity_sentence() if rng.random() < 0.5 else sentence() for _ in range(rng.randint(1, 3))]
        parts["plan"] = " ".join(ap_p)

        text_pieces: list[str] = []
        sections: dict[str, tuple[int, int]] = {}
        offset = 0
        for name in ("subjective", "objective", "assessment", "plan"):
            body = parts[name]
            if text_pieces:
                text_pieces.append(" ")
                offset += 1
            sections[name] = (offset, offset + len(body))
            text_pieces.append(body)
            offset += len(body)
        notes.append(
            Note(
                note_id=f"soap-{i:04d}",
                text="".join(text_pieces),
                labels=(),
                sections=sections,
            )
        )
    return notes, gazetteer
