"""Exception hierarchy.

``DataError`` covers bad inputs (files, manifests, configs); ``NumericError``
covers failures of the numerical stages. The CLI maps them to exit codes 3
and 4.
"""


class CadenceError(Exception):
    module = "cadence"


class DataError(CadenceError, ValueError):
    pass


class NumericError(CadenceError, ArithmeticError):
    pass


class MalformedWavError(DataError):
    module = "corpus"


class UnsupportedWavError(DataError):
    module = "corpus"


class ManifestError(DataError):
    module = "corpus"


class ChatParseError(DataError):
    module = "chat"

    def __init__(self, message, line=None):
        self.line = line
        self.detail = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.detail, self.line)


class EmbeddingTableError(DataError):
    module = "text_features"

    def __init__(self, message, line=None):
        self.line = line
        self.detail = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.detail, self.line)


class SignalTooShortError(DataError):
    module = "dsp"


class ModelFileError(DataError):
    module = "serialize"


class TrainingError(NumericError):
    module = "classifiers"


class FoldError(CadenceError):
    """A LOSO fold failed; wraps the original exception."""

    module = "loso"

    def __init__(self, fold, subject_id, cause):
        self.fold = fold
        self.subject_id = subject_id
        self.cause = cause
        super().__init__(f"fold {fold} (held-out {subject_id}) failed: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return type(self), (self.fold, self.subject_id, self.cause)


class UsageError(CadenceError):
    """Bad command-line usage detected after argument parsing."""

    module = "cli"
