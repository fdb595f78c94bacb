"""Two-model combination: cloze reranking, concatenation, and oracle bounds.

``build_pool`` merges two prediction sets by interleaved rank (a1, b1, a2,
b2, ...) so both models' head precision survives truncation to the
candidate budget. ``rerank`` renders the cloze prompt and keeps a candidate
iff the scorer puts more mass on "yes" than on "no" at its mask slot; ties
reject. ``concat`` is the no-rescoring union baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Collection, Sequence

import numpy as np

from .decoder import PredictionSet
from .errors import NoteIdMismatchError
from .ontology import Note, Ontology, Vocabulary
from .prompts import DEFAULT_MAX_CANDIDATES, build_cloze_prompt
from .scorer import Scorer, ScorerContext

DEFAULT_POOL_SIZE = 50


@dataclass(frozen=True)
class PoolCandidate:
    code: str
    sources: frozenset[str]


@dataclass(frozen=True)
class CandidatePool:
    note_id: str
    candidates: tuple[PoolCandidate, ...]

    def codes(self) -> tuple[str, ...]:
        return tuple(c.code for c in self.candidates)


def build_pool(
    pred_a: PredictionSet, pred_b: PredictionSet, n_b: int = DEFAULT_POOL_SIZE
) -> CandidatePool:
    """Union of both models' codes, interleaved by rank, capped at ``n_b``."""
    if pred_a.note_id != pred_b.note_id:
        raise NoteIdMismatchError(f"{pred_a.note_id!r} != {pred_b.note_id!r}")
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    sources: dict[str, set[str]] = {}
    order: list[str] = []
    a, b = list(pred_a.codes), list(pred_b.codes)
    for i in range(max(len(a), len(b))):
        for tag, seq in (("a", a), ("b", b)):
            if i < len(seq):
                code = seq[i]
                if code not in sources:
                    sources[code] = set()
                    order.append(code)
                sources[code].add(tag)
    kept = order[:n_b]
    return CandidatePool(
        note_id=pred_a.note_id,
        candidates=tuple(PoolCandidate(code=c, sources=frozenset(sources[c])) for c in kept),
    )


def rerank(
    note: Note,
    pool: CandidatePool,
    scorer: Scorer,
    ontology: Ontology,
    *,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> PredictionSet:
    """Keep pool candidates whose cloze slot scores "yes" over "no".

    Kept candidates are ordered by the yes/no log-probability margin,
    descending, with ties broken by code string for reproducibility.
    """
    if note.note_id != pool.note_id:
        raise NoteIdMismatchError(f"{note.note_id!r} != {pool.note_id!r}")
    if not pool.candidates:
        raise ValueError("candidate pool is empty")
    vocab = ontology.vocab
    descriptions = [ontology.entry_for_code(c.code).description for c in pool.candidates]
    prompt = build_cloze_prompt(note, descriptions, vocab, max_candidates=max_candidates)
    yes_id, no_id = vocab.id_of("yes"), vocab.id_of("no")

    kept: list[tuple[float, str]] = []
    for cand, pos in zip(pool.candidates, prompt.mask_positions):
        ctx = ScorerContext(encoder_input=prompt.tokens, decoded=prompt.tokens[:pos])
        lp = scorer.log_probs(ctx)
        margin = float(lp[yes_id] - lp[no_id])
        if margin > 0.0:
            kept.append((margin, cand.code))
    kept.sort(key=lambda t: (-t[0], t[1]))
    return PredictionSet(
        note_id=note.note_id,
        codes=tuple(code for _, code in kept),
        scores=tuple(margin for margin, _ in kept),
        terminated_naturally=True,
    )


def concat(pred_a: PredictionSet, pred_b: PredictionSet) -> PredictionSet:
    """Set union keeping a's order first, then b's unseen codes.

    Scores are dropped: log-probabilities from different models are not
    comparable, so @K ranking of a concatenated set is emission order.
    """
    if pred_a.note_id != pred_b.note_id:
        raise NoteIdMismatchError(f"{pred_a.note_id!r} != {pred_b.note_id!r}")
    seen = set(pred_a.codes)
    codes = list(pred_a.codes) + [c for c in pred_b.codes if c not in seen]
    return PredictionSet(
        note_id=pred_a.note_id,
        codes=tuple(codes),
        scores=None,
        terminated_naturally=pred_a.terminated_naturally and pred_b.terminated_naturally,
    )


class ClozeOracleScorer(Scorer):
    """Answers each cloze slot from gold labels; the reranker upper bound.

    The slot being scored is identified by counting [MASK] tokens already
    present in the decoded prefix, so the scorer must be built for the same
    ordered candidate list the prompt was rendered from.
    """

    def __init__(
        self,
        candidate_codes: Sequence[str],
        gold_codes: Collection[str],
        vocab: Vocabulary,
        hit_mass: float = 0.9,
    ) -> None:
        if not 0.0 < hit_mass < 1.0:
            raise ValueError("hit_mass must be in (0, 1)")
        self._candidates = tuple(candidate_codes)
        self._gold = frozenset(gold_codes)
        self._n = len(vocab)
        self._mask_id = vocab.mask_id
        self._yes = vocab.id_of("yes")
        self._no = vocab.id_of("no")
        self._hit = math.log(hit_mass)
        self._miss = math.log((1.0 - hit_mass) / (self._n - 1))
        self._uniform = np.full(self._n, -math.log(self._n), dtype=np.float64)
        self._uniform.flags.writeable = False

    @property
    def vocab_size(self) -> int:
        return self._n

    def log_probs(self, ctx: ScorerContext) -> np.ndarray:
        slot = sum(1 for t in ctx.decoded if t == self._mask_id)
        if slot >= len(self._candidates):
            return self._uniform
        answer = self._yes if self._candidates[slot] in self._gold else self._no
        vec = np.full(self._n, self._miss, dtype=np.float64)
        vec[answer] = self._hit
        return vec


def oracle_rerank(
    note: Note, pool: CandidatePool, gold_codes: Collection[str], ontology: Ontology
) -> PredictionSet:
    """Rerank with the gold-label oracle: the attainable upper bound."""
    scorer = ClozeOracleScorer(pool.codes(), gold_codes, ontology.vocab)
    return rerank(note, pool, scorer, ontology, max_candidates=max(len(pool.candidates), DEFAULT_MAX_CANDIDATES))
