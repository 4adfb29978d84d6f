"""Exception types raised across the pipeline."""


class PromptVeilError(Exception):
    """Base class for all library errors."""


class PositionOutOfRange(PromptVeilError):
    """A token index does not exist in the prompt."""


class PositionNotMasked(PromptVeilError):
    """Candidate prediction was requested for a position that cannot be masked."""


class NerProviderFailure(PromptVeilError):
    """The NER provider raised while analyzing a text."""


class EmptyCorpus(PromptVeilError):
    """TF-IDF fitting needs at least one document."""


class ProviderFailure(PromptVeilError):
    """A masked-language-model provider raised during fill-mask."""


class OutOfVocabulary(PromptVeilError):
    """A token has no embedding in the provider's vocabulary."""


class SurrogateFailure(PromptVeilError):
    """The surrogate model could not score a prompt."""


class ObfuscationError(PromptVeilError):
    """A pipeline stage failed; carries the stage name for attribution."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class EmptyResults(PromptVeilError):
    """An attack was invoked on an empty result set."""


class JudgeFailure(PromptVeilError):
    """An LLM judge call failed for one example."""


class TransportError(PromptVeilError):
    """A chat-completion request failed after exhausting retries."""


class EvaluationAborted(PromptVeilError):
    """More than half of the evaluation calls failed; the run is unusable."""


class UnparseableJudgment(PromptVeilError):
    """The quality judge's response contained no usable scores."""


class ParseError(PromptVeilError):
    """A corpus file contained a malformed row; message names the line."""


class ConfigError(PromptVeilError):
    """A run configuration file is invalid."""


class MisconfiguredCategories(UserWarning):
    """Portrait category lists deviate from the expected 20/20/10 sizes."""
