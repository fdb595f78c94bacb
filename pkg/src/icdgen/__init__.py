"""Trie-constrained generative multi-label medical code assignment toolkit."""

from .decoder import (
    BatchDecodeResult,
    DecodeConfig,
    Hypothesis,
    PredictionSet,
    decode,
    decode_batch,
    decode_hypothesis,
)
from .ensemble import (
    CandidatePool,
    ClozeOracleScorer,
    PoolCandidate,
    build_pool,
    concat,
    oracle_rerank,
    rerank,
)
from .errors import (
    CacheFormatError,
    DuplicateCodeError,
    DuplicateDescriptionError,
    EmptyCorpusError,
    EmptyDescriptionError,
    IcdgenError,
    MissingGazetteerEntryError,
    NoMaskableSentenceError,
    NoteIdMismatchError,
    TooManyCandidatesError,
    UnknownTokenError,
    VocabMismatchError,
    VocabularyFrozenError,
)
from .fewshot import (
    build_fewshot_codes,
    build_frequency_table,
    evaluate_fewshot,
    project_predictions,
    split_mentioned,
)
from .masking import (
    PretrainPair,
    SoapNote,
    make_pretrain_pair,
    mlm_coverage,
    original_tokens,
    reconstruct_tokens,
    segment_sentences,
)
from .metrics import AtK, MetricsReport, evaluate, render_table
from .ontology import (
    CodeEntry,
    Note,
    Ontology,
    Vocabulary,
    canonical_text,
    detokenize,
    load_ontology,
    normalize_text,
    split_tokens,
    tokenize,
)
from .prompts import (
    ClozePrompt,
    GenPrompt,
    build_cloze_prompt,
    build_gen_prompt,
    parse_gen_prompt,
)
from .scorer import (
    NgramScorer,
    OracleScorer,
    Scorer,
    ScorerContext,
    UniformScorer,
    load_ngram,
    save_ngram,
    target_token_sequence,
    train_ngram,
)
from .trie import AllowedNext, DescTrie, allowed_next, build_trie, load_trie, save_trie

__version__ = "0.1.0"
