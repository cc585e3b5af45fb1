"""Exception types shared across the package."""


class DeidError(Exception):
    """Base class for all errors raised by this package."""


class LexiconError(DeidError):
    """Malformed lexicon input or blacklist/whitelist overlap."""


class FormatError(DeidError):
    """Malformed on-disk data (dataset lines, PGM headers, config files)."""


class DegenerateInputError(DeidError):
    """An encoder input collapsed to a zero vector before normalization."""


class VocabularyExhaustedError(DeidError):
    """Every candidate token at some position is excluded by the blacklist."""


class OptimizationError(DeidError):
    """Non-finite loss or gradient encountered during prompt optimization."""


class DatasetError(DeidError):
    """Invalid dataset contents (duplicate ids, out-of-range pixels)."""


class RecordError(DeidError):
    """Failure while de-identifying a single record, tagged with its id."""

    def __init__(self, record_id: str, message: str):
        super().__init__(f"record {record_id}: {message}")
        self.record_id = record_id
