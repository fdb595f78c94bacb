"""Few-shot code selection and the mentioned/unmentioned diagnosis split."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping, Sequence

from .decoder import PredictionSet
from .errors import MissingGazetteerEntryError
from .metrics import MetricsReport, evaluate
from .ontology import Note, Ontology, canonical_text

Gazetteer = Mapping[str, Sequence[str]]


def build_frequency_table(train: Iterable[Note]) -> Counter:
    """Per-code occurrence counts over the training notes' gold labels."""
    counts: Counter = Counter()
    for note in train:
        counts.update(note.labels)
    return counts


def build_fewshot_codes(
    train: Iterable[Note], test: Iterable[Note], lo: int = 1, hi: int = 5
) -> frozenset[str]:
    """Codes present in the test gold whose training count is in [lo, hi]."""
    if lo < 1:
        raise ValueError("lo must be >= 1")
    if hi < lo:
        raise ValueError("hi must be >= lo")
    counts = build_frequency_table(train)
    test_codes = {c for note in test for c in note.labels}
    return frozenset(c for c in test_codes if lo <= counts.get(c, 0) <= hi)


def split_mentioned(
    note: Note, gold_codes: Sequence[str], gazetteer: Gazetteer
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Partition gold codes by whether any gazetteer phrase appears in the note.

    Matching is a case-insensitive substring test over canonically normalized
    text, so it tolerates spacing and punctuation differences but not synonym
    variation beyond what the gazetteer lists.
    """
    haystack = canonical_text(note.text)
    mentioned: list[str] = []
    unmentioned: list[str] = []
    for code in gold_codes:
        phrases = gazetteer.get(code)
        if not phrases:
            raise MissingGazetteerEntryError(f"code {code!r} has no gazetteer phrases")
        if any(canonical_text(p) in haystack for p in phrases if canonical_text(p)):
            mentioned.append(code)
        else:
            unmentioned.append(code)
    return tuple(mentioned), tuple(unmentioned)


def project_predictions(pred: PredictionSet, codes: frozenset[str] | set[str]) -> PredictionSet:
    keep = [i for i, c in enumerate(pred.codes) if c in codes]
    return PredictionSet(
        note_id=pred.note_id,
        codes=tuple(pred.codes[i] for i in keep),
        scores=None if pred.scores is None else tuple(pred.scores[i] for i in keep),
        terminated_naturally=pred.terminated_naturally,
    )


def evaluate_fewshot(
    gold: Mapping[str, Sequence[str]],
    preds: Iterable[PredictionSet],
    ontology: Ontology,
    fewshot_codes: frozenset[str] | set[str],
    ks: Sequence[int] = (15,),
    *,
    external_predictions: str = "drop",
) -> MetricsReport:
    """Evaluate with gold and predictions projected onto the few-shot codes.

    ``external_predictions="fp"`` keeps out-of-set predictions as pooled
    micro false positives instead of dropping them.
    """
    if external_predictions not in ("drop", "fp"):
        raise ValueError("external_predictions must be 'drop' or 'fp'")
    subset = frozenset(fewshot_codes)
    gold_proj = {nid: tuple(c for c in labels if c in subset) for nid, labels in gold.items()}
    return evaluate(
        gold_proj,
        preds,
        ontology,
        ks,
        codes=sorted(subset),
        out_of_universe=external_predictions,
    )
