"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class ShiftSearchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ShiftSearchError):
    """Invalid user-supplied configuration (bad preset name, bad flag value)."""


class DatasetError(ShiftSearchError):
    """Dataset on disk is missing, malformed, or inconsistent."""


class AdapterError(ShiftSearchError):
    """External oracle process failed: transport, protocol, or process death."""


class EvaluationError(ShiftSearchError):
    """A fitness evaluation failed; carries the tuple that was being scored."""

    def __init__(self, message, tuple_text=None):
        super().__init__(message)
        self.tuple_text = tuple_text


class ModelFormatError(ShiftSearchError):
    """Model file has wrong magic bytes, unsupported version, or is truncated."""


class TrainingError(ShiftSearchError):
    """Training aborted (for example on a non-finite loss)."""
