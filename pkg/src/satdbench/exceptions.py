"""Exception hierarchy shared across the package."""


class SatdBenchError(Exception):
    """Base class for all errors raised by this package."""


class CorpusSchemaError(SatdBenchError):
    """The input file is missing a required column or is not parseable."""


class CorpusDataError(SatdBenchError):
    """A row of the input file carries an invalid value."""


class VocabularyError(SatdBenchError):
    """Vocabulary fitting or loading failed (e.g. empty corpus)."""


class SamplerError(SatdBenchError):
    """An oversampler cannot run on the given class distribution."""


class TrainingError(SatdBenchError):
    """Model training preconditions are violated (e.g. single-class data)."""


class ModelFormatError(SatdBenchError):
    """A serialized model file is truncated, corrupt, or of an unknown version."""


class ProtocolError(SatdBenchError):
    """A split protocol cannot be applied to the given corpus."""
