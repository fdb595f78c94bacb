"""Trie-constrained beam search with the dual-terminator protocol.

Each decode step restricts the scorer's distribution to tokens that extend
a valid description prefix. At a completed description the beam may choose
";" (record the code and start another description) or "[EOS]" (record the
code and stop); "[EOS]" is also offered at the start of a description once
at least one code has been recorded, so the model decides how many codes a
note gets. Disallowed tokens get -inf and the remainder is renormalized, so
accumulated scores stay comparable across hypotheses.

Determinism: ties in accumulated score are broken by the lexicographically
smaller token sequence (which means smaller token id at the first
difference, then shorter hypothesis).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import VocabMismatchError
from .ontology import Note, Vocabulary
from .prompts import DEFAULT_MAX_INPUT_TOKENS, build_gen_prompt
from .scorer import Scorer, ScorerContext
from .trie import DescTrie, TrieNode

StepHook = Callable[[list[float], list[float]], None]


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 2
    max_codes: int = 100
    max_total_tokens: int = 4096
    length_normalization: bool = False
    max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_codes < 1:
            raise ValueError("max_codes must be >= 1")
        if self.max_total_tokens < 1:
            raise ValueError("max_total_tokens must be >= 1")


@dataclass(frozen=True)
class PredictionSet:
    """Ordered code assignments for one note."""

    note_id: str
    codes: tuple[str, ...]
    scores: tuple[float, ...] | None
    terminated_naturally: bool

    def __post_init__(self) -> None:
        if len(set(self.codes)) != len(self.codes):
            raise ValueError(f"prediction for note {self.note_id!r} repeats a code")
        if self.scores is not None and len(self.scores) != len(self.codes):
            raise ValueError("scores must align with codes")


@dataclass
class Hypothesis:
    """One beam item."""

    tokens: tuple[int, ...] = ()
    cursor: tuple[int, ...] = ()
    completed: tuple[tuple[str, float], ...] = ()
    log_prob: float = 0.0
    finished: bool = False
    # Trie node for the cursor and the running score of the open description.
    node: TrieNode | None = field(default=None, repr=False)
    cursor_log_prob: float = 0.0

    def completed_codes(self) -> tuple[str, ...]:
        return tuple(code for code, _ in self.completed)


def _effective(score: float, length: int, normalize: bool) -> float:
    if normalize and length > 0:
        return score / length
    return score


def _select_top(ids: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores; exact ties resolved toward smaller ids.

    ``ids`` must be sorted ascending so that positional order equals id
    order within a tie class.
    """
    n = len(scores)
    if n <= k:
        return np.arange(n)
    part = np.argpartition(-scores, k - 1)[:k]
    kth = scores[part].min()
    greater = np.flatnonzero(scores > kth)
    ties = np.flatnonzero(scores == kth)
    return np.concatenate([greater, ties[: k - len(greater)]])


class _Candidate:
    __slots__ = ("score", "tokens", "parent", "token", "step_lp")

    def __init__(self, score: float, tokens: tuple[int, ...], parent: Hypothesis, token: int, step_lp: float):
        self.score = score
        self.tokens = tokens
        self.parent = parent
        self.token = token
        self.step_lp = step_lp


def decode(
    note: Note,
    trie: DescTrie,
    scorer: Scorer,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary,
    step_hook: StepHook | None = None,
) -> PredictionSet:
    """Beam-search one note into an ordered, duplicate-free code assignment."""
    winner = decode_hypothesis(note, trie, scorer, cfg, vocab=vocab, step_hook=step_hook)
    return PredictionSet(
        note_id=note.note_id,
        codes=winner.completed_codes(),
        scores=tuple(score for _, score in winner.completed),
        terminated_naturally=winner.finished,
    )


def decode_hypothesis(
    note: Note,
    trie: DescTrie,
    scorer: Scorer,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary,
    step_hook: StepHook | None = None,
) -> Hypothesis:
    """Run the beam search and return the winning hypothesis itself."""
    cfg = cfg or DecodeConfig()
    if scorer.vocab_size != len(vocab):
        raise VocabMismatchError(
            f"scorer vocab size {scorer.vocab_size} != vocabulary size {len(vocab)}"
        )
    if trie.vocab_size != len(vocab):
        raise VocabMismatchError(
            f"trie vocab size {trie.vocab_size} != vocabulary size {len(vocab)}"
        )

    prompt = build_gen_prompt(note, (), vocab, max_input_tokens=cfg.max_input_tokens)
    encoder_input = prompt.tokens
    eos, sep = vocab.eos_id, vocab.sep_id

    root = trie.root
    # Description tokens are always content tokens, whose ids sit above the
    # reserved block; prepending terminators therefore keeps arrays sorted.
    root_plain = trie.root_child_ids
    assert root_plain.size == 0 or eos < sep < int(root_plain[0])
    root_with_eos = np.concatenate([np.array([eos], dtype=np.int64), root_plain])
    eos_only = np.array([eos], dtype=np.int64)

    live: list[Hypothesis] = [Hypothesis(node=root)]
    finished: list[Hypothesis] = []
    best_live = live[0]

    def sort_key(h: Hypothesis):
        return (-_effective(h.log_prob, len(h.tokens), cfg.length_normalization), h.tokens)

    while live:
        if len(live[0].tokens) >= cfg.max_total_tokens:
            break
        candidates: list[_Candidate] = []
        for hyp in live:
            node = hyp.node
            assert node is not None
            if node is root:
                if len(hyp.completed) >= cfg.max_codes:
                    ids = eos_only
                elif hyp.completed:
                    ids = root_with_eos
                else:
                    ids = root_plain
            else:
                # Trie completeness: a non-terminal node always has children.
                assert node.children or node.is_terminal
                child_ids = sorted(node.children)
                if node.is_terminal and node.code not in {c for c, _ in hyp.completed}:
                    # Dual terminator; suppressed when it would repeat a code.
                    ids = np.array([eos, sep] + child_ids, dtype=np.int64)
                else:
                    ids = np.array(child_ids, dtype=np.int64)
                if ids.size == 0:
                    continue
            lp = scorer.log_probs(ScorerContext(encoder_input, hyp.tokens))
            gathered = lp[ids]
            m = gathered.max()
            lse = m + math.log(np.exp(gathered - m).sum())
            step_lps = gathered - lse
            scores = hyp.log_prob + step_lps
            for idx in _select_top(ids, scores, cfg.beam_width):
                tok = int(ids[idx])
                candidates.append(
                    _Candidate(float(scores[idx]), hyp.tokens + (tok,), hyp, tok, float(step_lps[idx]))
                )

        if not candidates:
            break

        length = len(candidates[0].tokens)
        candidates.sort(
            key=lambda c: (-_effective(c.score, length, cfg.length_normalization), c.tokens)
        )
        kept, dropped = candidates[: cfg.beam_width], candidates[cfg.beam_width:]
        if step_hook is not None:
            step_hook([c.score for c in kept], [c.score for c in dropped])

        next_live: list[Hypothesis] = []
        for cand in kept:
            parent = cand.parent
            node = parent.node
            assert node is not None
            tok = cand.token
            if tok == sep:
                assert node.code is not None
                hyp = Hypothesis(
                    tokens=cand.tokens,
                    cursor=(),
                    completed=parent.completed + ((node.code, parent.cursor_log_prob),),
                    log_prob=cand.score,
                    node=root,
                    cursor_log_prob=0.0,
                )
                next_live.append(hyp)
            elif tok == eos:
                completed = parent.completed
                if node is not root:
                    assert node.code is not None
                    completed = completed + ((node.code, parent.cursor_log_prob),)
                finished.append(
                    Hypothesis(
                        tokens=cand.tokens,
                        cursor=(),
                        completed=completed,
                        log_prob=cand.score,
                        finished=True,
                        node=None,
                    )
                )
            else:
                child = node.children[tok]
                next_live.append(
                    Hypothesis(
                        tokens=cand.tokens,
                        cursor=parent.cursor + (tok,),
                        completed=parent.completed,
                        log_prob=cand.score,
                        node=child,
                        cursor_log_prob=parent.cursor_log_prob + cand.step_lp,
                    )
                )

        live = next_live
        if live:
            live.sort(key=sort_key)
            best_live = live[0]
            if finished and not cfg.length_normalization:
                # A live branch strictly below the best finished score can
                # never win: per-step log-probabilities are <= 0. (Normalized
                # scores are not monotone, so this only applies to raw sums.)
                best_fin = max(h.log_prob for h in finished)
                live = [h for h in live if h.log_prob >= best_fin]

    if finished:
        return min(finished, key=sort_key)
    return best_live


@dataclass
class BatchDecodeResult:
    """Order-aligned batch output; failed notes leave a None and an error."""

    predictions: list[PredictionSet | None]
    errors: dict[str, Exception]

    def raise_if_failed(self) -> list[PredictionSet]:
        if self.errors:
            summary = "; ".join(f"{nid}: {err}" for nid, err in self.errors.items())
            raise RuntimeError(f"{len(self.errors)} note(s) failed to decode: {summary}")
        return [p for p in self.predictions if p is not None]


def decode_batch(
    notes: Sequence[Note],
    trie: DescTrie,
    scorer: Scorer,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary,
    max_workers: int = 1,
) -> BatchDecodeResult:
    """Decode notes independently; errors are collected, not fail-fast."""
    notes = list(notes)
    predictions: list[PredictionSet | None] = [None] * len(notes)
    errors: dict[str, Exception] = {}

    def run(i: int) -> None:
        try:
            predictions[i] = decode(notes[i], trie, scorer, cfg, vocab=vocab)
        except Exception as exc:  # noqa: BLE001 - collected per contract
            errors[notes[i].note_id] = exc

    if max_workers <= 1:
        for i in range(len(notes)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(run, range(len(notes))))
    return BatchDecodeResult(predictions=predictions, errors=errors)
