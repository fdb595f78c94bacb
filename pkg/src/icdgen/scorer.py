"""Next-token distribution providers.

The Scorer interface is the seam where a fine-tuned language model would
plug in. The shipped implementations are deliberately small: a uniform
baseline, a target-following oracle for exact-recovery tests, and an
add-one-smoothed n-gram model. Every ``log_probs`` output is a proper
distribution over the full vocabulary (logsumexp == 0 within 1e-6) and a
pure function of its context.

N-gram cache format (little-endian), version 1:

    magic      4s  b"NGS1"
    version    u16 1
    digest     64s vocabulary digest (sha256 hex, ascii)
    order      u8
    vocab_size u32
    n_contexts u32, then per context:
        ctx_len u8, ctx tokens u32 * ctx_len,
        n_continuations u32, then (token u32, count u64) pairs
"""

from __future__ import annotations

import abc
import math
import struct
from collections import Counter
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CacheFormatError, EmptyCorpusError, VocabMismatchError
from .ontology import Ontology, Vocabulary

_MAGIC = b"NGS1"
_VERSION = 1


@dataclass(frozen=True)
class ScorerContext:
    """Encoder-side prompt ids plus the decode-side tokens emitted so far."""

    encoder_input: tuple[int, ...]
    decoded: tuple[int, ...]


class Scorer(abc.ABC):
    """Abstract next-token scorer over a fixed vocabulary."""

    @property
    @abc.abstractmethod
    def vocab_size(self) -> int: ...

    @abc.abstractmethod
    def log_probs(self, ctx: ScorerContext) -> np.ndarray:
        """Return log-probabilities over the full vocabulary for the next token."""


class UniformScorer(Scorer):
    """Every token equally likely; the floor baseline."""

    def __init__(self, vocab_size: int) -> None:
        if vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        self._n = vocab_size
        self._vec = np.full(vocab_size, -math.log(vocab_size), dtype=np.float64)
        self._vec.flags.writeable = False

    @property
    def vocab_size(self) -> int:
        return self._n

    def log_probs(self, ctx: ScorerContext) -> np.ndarray:
        return self._vec


class OracleScorer(Scorer):
    """Follows a fixed target sequence.

    At position ``j == len(ctx.decoded)`` the target's j-th token receives
    ``hit_mass``; the remainder is spread uniformly over the other tokens.
    Past the end of the target the distribution is uniform. Greedy decoding
    therefore recovers the target exactly.
    """

    def __init__(self, target: Sequence[int], vocab_size: int, hit_mass: float = 0.9) -> None:
        if not 0.0 < hit_mass < 1.0:
            raise ValueError("hit_mass must be in (0, 1)")
        if vocab_size < 2:
            raise ValueError("OracleScorer needs a vocabulary of at least 2 tokens")
        self.target = tuple(target)
        self._n = vocab_size
        self._hit = math.log(hit_mass)
        self._miss = math.log((1.0 - hit_mass) / (vocab_size - 1))
        self._uniform = np.full(vocab_size, -math.log(vocab_size), dtype=np.float64)
        self._uniform.flags.writeable = False

    @classmethod
    def for_codes(
        cls, ontology: Ontology, codes: Sequence[str], hit_mass: float = 0.9
    ) -> "OracleScorer":
        """Oracle whose target is ``desc1 ; desc2 ; ... ; descN [EOS]``."""
        target = target_token_sequence(ontology, codes)
        return cls(target, vocab_size=len(ontology.vocab), hit_mass=hit_mass)

    @property
    def vocab_size(self) -> int:
        return self._n

    def log_probs(self, ctx: ScorerContext) -> np.ndarray:
        j = len(ctx.decoded)
        if j >= len(self.target):
            return self._uniform
        vec = np.full(self._n, self._miss, dtype=np.float64)
        vec[self.target[j]] = self._hit
        return vec


def target_token_sequence(ontology: Ontology, codes: Sequence[str]) -> tuple[int, ...]:
    """Token stream for an ordered code list: descriptions joined by ";", then [EOS]."""
    vocab = ontology.vocab
    out: list[int] = []
    for i, code in enumerate(codes):
        if i:
            out.append(vocab.sep_id)
        out.extend(ontology.entry_for_code(code).tokens)
    out.append(vocab.eos_id)
    return tuple(out)


class NgramScorer(Scorer):
    """Add-one-smoothed n-gram conditional model.

    Conditions only on the tail of the decoded prefix; the encoder input is
    ignored (a documented limitation of this toy scorer). When the longest
    context has zero count the model backs off one order at a time down to
    the unigram distribution.
    """

    def __init__(
        self,
        order: int,
        vocab_size: int,
        counts: dict[tuple[int, ...], Counter],
        vocab_digest: str,
    ) -> None:
        self.order = order
        self._n = vocab_size
        self._counts = counts
        self._totals = {ctx: sum(c.values()) for ctx, c in counts.items()}
        self.vocab_digest = vocab_digest

    @property
    def vocab_size(self) -> int:
        return self._n

    def _context_for(self, decoded: tuple[int, ...]) -> tuple[int, ...]:
        tail = decoded[-(self.order - 1):] if self.order > 1 else ()
        for drop in range(len(tail) + 1):
            ctx = tail[drop:]
            if self._totals.get(ctx, 0) > 0:
                return ctx
        return ()

    def log_probs(self, ctx: ScorerContext) -> np.ndarray:
        key = self._context_for(ctx.decoded)
        total = self._totals.get(key, 0)
        denom = math.log(total + self._n)
        vec = np.full(self._n, -denom, dtype=np.float64)
        for tok, cnt in self._counts.get(key, {}).items():
            vec[tok] = math.log(cnt + 1) - denom
        return vec


def train_ngram(
    corpus: Iterable[Sequence[int]], order: int, vocab: Vocabulary
) -> NgramScorer:
    """Count 1..order-grams over the corpus sequences."""
    if not 1 <= order <= 4:
        raise ValueError("order must be in [1, 4]")
    counts: dict[tuple[int, ...], Counter] = {}
    n_tokens = 0
    for seq in corpus:
        seq = tuple(seq)
        n_tokens += len(seq)
        for i, tok in enumerate(seq):
            for k in range(min(order - 1, i) + 1):
                ctx = seq[i - k : i]
                counts.setdefault(ctx, Counter())[tok] += 1
    if n_tokens == 0:
        raise EmptyCorpusError("n-gram training corpus is empty")
    return NgramScorer(order, len(vocab), counts, vocab.digest())


def save_ngram(scorer: NgramScorer, path: str | Path) -> None:
    buf = BytesIO()
    buf.write(struct.pack("<4sH", _MAGIC, _VERSION))
    buf.write(scorer.vocab_digest.encode("ascii").ljust(64, b"\x00"))
    buf.write(struct.pack("<BI", scorer.order, scorer.vocab_size))
    contexts = sorted(scorer._counts)
    buf.write(struct.pack("<I", len(contexts)))
    for ctx in contexts:
        buf.write(struct.pack("<B", len(ctx)))
        for tok in ctx:
            buf.write(struct.pack("<I", tok))
        cont = scorer._counts[ctx]
        buf.write(struct.pack("<I", len(cont)))
        for tok in sorted(cont):
            buf.write(struct.pack("<IQ", tok, cont[tok]))
    Path(path).write_bytes(buf.getvalue())


def load_ngram(path: str | Path, vocab: Vocabulary) -> NgramScorer:
    raw = Path(path).read_bytes()
    buf = BytesIO(raw)

    def read(fmt: str):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CacheFormatError(f"{path}: truncated n-gram file")
        return struct.unpack(fmt, chunk)

    magic, version = read("<4sH")
    if magic != _MAGIC:
        raise CacheFormatError(f"{path}: not an icdgen n-gram file")
    if version != _VERSION:
        raise CacheFormatError(f"{path}: unsupported n-gram file version {version}")
    digest = buf.read(64).rstrip(b"\x00").decode("ascii")
    if digest != vocab.digest():
        raise VocabMismatchError(f"{path}: n-gram model was trained on a different vocabulary")
    order, vocab_size = read("<BI")
    if vocab_size != len(vocab):
        raise VocabMismatchError(f"{path}: vocab size {vocab_size} != {len(vocab)}")
    (n_contexts,) = read("<I")
    counts: dict[tuple[int, ...], Counter] = {}
    for _ in range(n_contexts):
        (ctx_len,) = read("<B")
        ctx = tuple(read(f"<{ctx_len}I")) if ctx_len else ()
        (n_cont,) = read("<I")
        counter: Counter = Counter()
        for _ in range(n_cont):
            tok, cnt = read("<IQ")
            counter[tok] = cnt
        counts[ctx] = counter
    return NgramScorer(order, vocab_size, counts, digest)
