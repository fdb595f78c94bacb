"""Multi-label evaluation: macro/micro precision, recall, F1, accuracy, @K.

Per-code true/false positives and false negatives are tallied over notes.
Macro metrics average the per-code values over the whole code universe,
with codes whose denominator is zero contributing 0. Micro metrics pool
the counts. F1 is the harmonic mean of the corresponding precision and
recall; "accuracy" is Jaccard-style TP / (TP + FP + FN).

P@K and R@K take each note's top-K predictions ranked by score (emission
order when no scores are present) and average per-note values; a note with
fewer than K predictions keeps K in the P@K denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

from .decoder import PredictionSet
from .errors import NoteIdMismatchError
from .ontology import Ontology


@dataclass(frozen=True)
class AtK:
    precision: float
    recall: float


@dataclass(frozen=True)
class MetricsReport:
    macro_p: float
    macro_r: float
    macro_f1: float
    macro_acc: float
    micro_p: float
    micro_r: float
    micro_f1: float
    micro_acc: float
    at_k: Mapping[int, AtK]

    def as_dict(self) -> dict:
        return {
            "macro": {
                "precision": self.macro_p,
                "recall": self.macro_r,
                "f1": self.macro_f1,
                "accuracy": self.macro_acc,
            },
            "micro": {
                "precision": self.micro_p,
                "recall": self.micro_r,
                "f1": self.micro_f1,
                "accuracy": self.micro_acc,
            },
            "at_k": {
                str(k): {"precision": v.precision, "recall": v.recall}
                for k, v in sorted(self.at_k.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return _safe_div(2 * p * r, p + r)


def _ranked_codes(pred: PredictionSet) -> list[str]:
    if pred.scores is None:
        return list(pred.codes)
    order = sorted(range(len(pred.codes)), key=lambda i: (-pred.scores[i], i))
    return [pred.codes[i] for i in order]


OutOfUniverse = Literal["error", "fp", "drop"]


def evaluate(
    gold: Mapping[str, Sequence[str]],
    preds: Iterable[PredictionSet],
    ontology: Ontology | None,
    ks: Sequence[int] = (15,),
    *,
    codes: Sequence[str] | None = None,
    out_of_universe: OutOfUniverse = "error",
) -> MetricsReport:
    """Score predictions against gold label sets.

    ``codes`` overrides the macro-averaging universe (defaults to the full
    ontology). Predictions outside the universe either raise, count as
    pooled micro false positives, or are dropped, per ``out_of_universe``.
    """
    if codes is None:
        if ontology is None:
            raise ValueError("either an ontology or an explicit code universe is required")
        universe: tuple[str, ...] = ontology.codes()
    else:
        universe = tuple(codes)
    if not universe:
        raise ValueError("code universe is empty")
    universe_set = set(universe)
    if len(universe_set) != len(universe):
        raise ValueError("code universe contains duplicates")

    pred_by_id: dict[str, PredictionSet] = {}
    for p in preds:
        if p.note_id in pred_by_id:
            raise NoteIdMismatchError(f"duplicate prediction for note {p.note_id!r}")
        pred_by_id[p.note_id] = p
    if set(pred_by_id) != set(gold):
        missing = set(gold) - set(pred_by_id)
        extra = set(pred_by_id) - set(gold)
        raise NoteIdMismatchError(f"note ids differ (missing={sorted(missing)}, extra={sorted(extra)})")

    tp: dict[str, int] = {c: 0 for c in universe}
    fp: dict[str, int] = {c: 0 for c in universe}
    fn: dict[str, int] = {c: 0 for c in universe}
    external_fp = 0

    ks = tuple(ks)
    p_at: dict[int, float] = {k: 0.0 for k in ks}
    r_at: dict[int, float] = {k: 0.0 for k in ks}
    n_notes = len(gold)

    for note_id, gold_codes in gold.items():
        gold_set = set(gold_codes)
        if len(gold_set) != len(tuple(gold_codes)):
            raise ValueError(f"gold labels for note {note_id!r} contain duplicates")
        if not gold_set <= universe_set:
            raise ValueError(f"gold labels for note {note_id!r} fall outside the code universe")
        pred = pred_by_id[note_id]
        pred_codes = list(pred.codes)
        outside = [c for c in pred_codes if c not in universe_set]
        if outside:
            if out_of_universe == "error":
                raise ValueError(
                    f"prediction for note {note_id!r} contains out-of-universe codes {outside}"
                )
            if out_of_universe == "fp":
                external_fp += len(outside)
        for c in pred_codes:
            if c not in universe_set:
                continue
            if c in gold_set:
                tp[c] += 1
            else:
                fp[c] += 1
        for c in gold_set - set(pred_codes):
            fn[c] += 1

        ranked = _ranked_codes(pred)
        if out_of_universe == "drop":
            ranked = [c for c in ranked if c in universe_set]
        for k in ks:
            hits = sum(1 for c in ranked[:k] if c in gold_set)
            p_at[k] += hits / k
            r_at[k] += _safe_div(hits, len(gold_set))

    macro_p = sum(_safe_div(tp[c], tp[c] + fp[c]) for c in universe) / len(universe)
    macro_r = sum(_safe_div(tp[c], tp[c] + fn[c]) for c in universe) / len(universe)
    macro_acc = sum(_safe_div(tp[c], tp[c] + fp[c] + fn[c]) for c in universe) / len(universe)

    sum_tp = sum(tp.values())
    sum_fp = sum(fp.values()) + external_fp
    sum_fn = sum(fn.values())
    micro_p = _safe_div(sum_tp, sum_tp + sum_fp)
    micro_r = _safe_div(sum_tp, sum_tp + sum_fn)
    micro_acc = _safe_div(sum_tp, sum_tp + sum_fp + sum_fn)

    at_k = {
        k: AtK(precision=_safe_div(p_at[k], n_notes), recall=_safe_div(r_at[k], n_notes))
        for k in ks
    }
    return MetricsReport(
        macro_p=macro_p,
        macro_r=macro_r,
        macro_f1=_f1(macro_p, macro_r),
        macro_acc=macro_acc,
        micro_p=micro_p,
        micro_r=micro_r,
        micro_f1=_f1(micro_p, micro_r),
        micro_acc=micro_acc,
        at_k=at_k,
    )


def render_table(report: MetricsReport) -> str:
    """Plain-text table with F1/Prec/Recall/Acc x Mac/Mic plus @K columns."""
    headers = ["F1 Mac", "F1 Mic", "Prec Mac", "Prec Mic", "Rec Mac", "Rec Mic", "Acc Mac", "Acc Mic"]
    values = [
        report.macro_f1,
        report.micro_f1,
        report.macro_p,
        report.micro_p,
        report.macro_r,
        report.micro_r,
        report.macro_acc,
        report.micro_acc,
    ]
    for k, v in sorted(report.at_k.items()):
        headers.extend([f"P@{k}", f"R@{k}"])
        values.extend([v.precision, v.recall])
    cells = [f"{100 * v:.1f}" for v in values]
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return head + "\n" + row
