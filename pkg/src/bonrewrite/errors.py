"""Exception hierarchy for the reformulation pipeline."""


class BonRewriteError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(BonRewriteError, ValueError):
    """A record on disk does not match its documented layout."""


class InvalidCandidateError(BonRewriteError, ValueError):
    pass


class IndexingError(BonRewriteError, ValueError):
    pass


class PassageNotFoundError(BonRewriteError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EmptyIndexError(BonRewriteError, ValueError):
    pass


class DimensionError(BonRewriteError, ValueError):
    pass


class InvalidRankError(BonRewriteError, ValueError):
    pass


class AssessmentError(BonRewriteError):
    pass


class ModelInputError(BonRewriteError, ValueError):
    pass


class ConfigError(BonRewriteError, ValueError):
    pass


class TrainingError(BonRewriteError):
    pass


class CheckpointFormatError(BonRewriteError):
    """Checkpoint bytes are malformed; ``offset`` points at the first bad byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointVersionError(BonRewriteError):
    pass


class PromptError(BonRewriteError, ValueError):
    pass


class GenerationError(BonRewriteError):
    pass


class TransportError(GenerationError):
    """Retryable failure talking to a generation backend."""


class FixtureMissError(GenerationError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class BudgetError(BonRewriteError, ValueError):
    pass


class StrategyError(BonRewriteError, ValueError):
    pass


class EvaluationError(BonRewriteError):
    pass
