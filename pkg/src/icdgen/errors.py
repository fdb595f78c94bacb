"""Exception types shared across the package."""


class IcdgenError(Exception):
    """Base class for all icdgen errors."""


class UnknownTokenError(IcdgenError):
    """A token string has no id in a frozen/decode-side vocabulary."""


class VocabularyFrozenError(IcdgenError):
    """Attempted to add a token to a frozen vocabulary."""


class DuplicateCodeError(IcdgenError):
    """Two ontology rows share the same code identifier."""


class DuplicateDescriptionError(IcdgenError):
    """Two ontology rows normalize to the same description."""


class EmptyDescriptionError(IcdgenError):
    """An ontology row's description is empty after normalization."""


class EmptyCorpusError(IcdgenError):
    """An n-gram model was trained on an empty corpus."""


class TooManyCandidatesError(IcdgenError):
    """A cloze prompt was requested for more candidates than allowed."""


class NoteIdMismatchError(IcdgenError):
    """Gold and predicted note ids (or two prediction sets) do not line up."""


class VocabMismatchError(IcdgenError):
    """Components built against different vocabularies were combined."""


class MissingGazetteerEntryError(IcdgenError):
    """A gold code has no phrases in the gazetteer."""


class NoMaskableSentenceError(IcdgenError):
    """No assessment/plan sentence carries a gazetteer entity."""


class CacheFormatError(IcdgenError):
    """A persisted binary artifact is malformed, wrong version, or stale."""
