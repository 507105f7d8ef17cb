"""Exception types shared across the toolkit."""


class AudioSDSError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(AudioSDSError):
    """Arguments violate a documented precondition (shape, range, emptiness)."""


class FormatError(AudioSDSError):
    """A file or byte stream is malformed. Carries the offending byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericOverflowError(AudioSDSError):
    """A renderer produced a non-finite value. Carries the first bad sample index."""

    def __init__(self, message, sample_index=None):
        if sample_index is not None:
            message = f"{message} (first bad sample {sample_index})"
        super().__init__(message)
        self.sample_index = sample_index


class CapabilityError(AudioSDSError):
    """The active prior backend does not support a required operation."""


class ConfigurationError(AudioSDSError):
    """Missing or inconsistent configuration (checkpoint paths, option combinations)."""

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else []
        if self.problems:
            message = message + "\n  - " + "\n  - ".join(self.problems)
        super().__init__(message)


class TransportError(AudioSDSError):
    """A remote endpoint (bridge, captioner, LLM, CLAP) could not be reached."""


class ProtocolError(AudioSDSError):
    """A remote endpoint answered with a malformed or out-of-contract payload."""


class ParseError(AudioSDSError):
    """A free-form response could not be parsed. Carries the raw text."""

    def __init__(self, message, raw_text=None):
        super().__init__(message)
        self.raw_text = raw_text


class PromptValidationError(ParseError):
    """A parsed prompt proposal violates its invariants (empty/duplicate prompts)."""


class ClientError(AudioSDSError):
    """An external text client failed after retries."""

    def __init__(self, message, retries=0):
        super().__init__(f"{message} (retries: {retries})")
        self.retries = retries


class TrainingError(AudioSDSError):
    """Training diverged. Carries the step index at which the loss went non-finite."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class UndefinedMetricError(AudioSDSError):
    """A metric is undefined for the given inputs (e.g. silent reference)."""
