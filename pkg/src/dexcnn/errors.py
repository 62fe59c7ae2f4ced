"""Exception hierarchy shared by every stage of the pipeline."""


class DexCnnError(Exception):
    """Base class for all package errors."""


# apk / manifest ingestion
class IngestError(DexCnnError):
    pass


class ApkNotFoundError(IngestError, FileNotFoundError):
    pass


class MalformedArchiveError(IngestError):
    pass


class NoDexError(IngestError):
    pass


class DecompressFailedError(IngestError):
    pass


class ManifestSchemaError(IngestError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DuplicatePathError(IngestError):
    pass


# dex parsing
class DexParseError(DexCnnError):
    pass


class BadMagicError(DexParseError):
    pass


class TruncatedFileError(DexParseError):
    pass


class IndexOutOfPoolError(DexParseError):
    pass


class MalformedCodeItemError(DexParseError):
    pass


# sequence pipeline
class EmptyCorpusError(DexCnnError, ValueError):
    pass


class InvalidLengthError(DexCnnError, ValueError):
    pass


class InvalidBlockCountError(DexCnnError, ValueError):
    pass


# network
class DimensionMismatchError(DexCnnError, ValueError):
    pass


class BadLabelError(DexCnnError, ValueError):
    pass


class LabelOutOfRangeError(BadLabelError):
    pass


class StaleTraceError(DexCnnError):
    pass


# evaluation
class InconsistentCountsError(DexCnnError, ValueError):
    pass


class TooFewSamplesError(DexCnnError, ValueError):
    pass


class UnknownFamilyError(DexCnnError, KeyError):
    pass


class NotEnoughSamplesError(DexCnnError, ValueError):
    pass


class InsufficientYearsError(DexCnnError, ValueError):
    pass


class SpecInfeasibleError(DexCnnError, ValueError):
    pass


# persistence
class StoreError(DexCnnError):
    pass


class StoreIOError(StoreError, OSError):
    pass


class ModelBadMagicError(StoreError):
    pass


class VersionUnsupportedError(StoreError):
    pass


class CorruptTensorError(StoreError):
    pass


class DigestMismatchError(StoreError):
    pass
