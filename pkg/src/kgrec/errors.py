"""Exception types shared across the package."""


class KgrecError(Exception):
    """Base class for all package errors."""


class ParseError(KgrecError):
    """Malformed input file; carries the file path and 1-based line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class ValidationError(KgrecError):
    """Input files are well-formed but mutually inconsistent."""


class DimensionError(KgrecError):
    """Tensor shapes disagree with the configured dimensions."""


class SingularSystemError(KgrecError):
    """Closed-form label solve is singular; names the offending entities."""

    def __init__(self, entities, message=None):
        self.entities = list(entities)
        if message is None:
            shown = ", ".join(str(e) for e in self.entities[:10])
            more = "" if len(self.entities) <= 10 else ", ..."
            message = (f"label system is singular: entities [{shown}{more}] "
                       "cannot reach any clamped item")
        super().__init__(message)


class CheckpointError(KgrecError):
    """Checkpoint file is corrupt, truncated, or incompatible."""


class TrainingDiverged(KgrecError):
    """Loss became non-finite; carries the last finite epoch's parameters."""

    def __init__(self, message, params=None, epoch=None):
        super().__init__(message)
        self.params = params
        self.epoch = epoch
