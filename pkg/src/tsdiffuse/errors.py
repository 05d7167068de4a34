"""Exception types raised across the toolkit."""


class TsDiffuseError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TsDiffuseError, ValueError):
    """Invalid or inconsistent configuration value."""


class TrainingDiverged(TsDiffuseError, RuntimeError):
    """A non-finite loss or prediction appeared during training or sampling."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CheckpointError(TsDiffuseError):
    """Checkpoint file is unreadable or malformed."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CorpusError(TsDiffuseError, ValueError):
    """Corpus file violates the JSONL record schema."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class CaptionerError(TsDiffuseError):
    """Retryable failure talking to an external captioning provider."""

    retryable = True


class CaptionParseError(CaptionerError):
    """Provider response did not contain all five labeled descriptions."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("caption response missing description type(s): " + ", ".join(self.missing))
