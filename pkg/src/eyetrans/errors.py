"""Exception types shared across the pipeline."""


class EyeTransError(Exception):
    """Base class for all library errors."""


class SourceSyntaxError(EyeTransError, SyntaxError):
    """Malformed or unsupported source code, with position info.

    Also a builtin SyntaxError so callers can catch either way.
    """

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class TooLarge(EyeTransError):
    """Method exceeds the token/node budget."""


class ValidationError(EyeTransError):
    """An ingested AST document violates a structural invariant."""


class DanglingEndpoint(EyeTransError):
    """An attention switch references a node id absent from the tree."""


class UnknownEndpoint(EyeTransError):
    """A switch endpoint does not appear in the token sequence being fused."""


class EmptyStream(EyeTransError):
    """A gaze stream contains no valid samples."""


class NoEligibleNodes(EyeTransError):
    """The synthetic gaze generator found no node with nonzero prior weight."""


class ShapeMismatch(EyeTransError):
    """Tensor operands have incompatible shapes."""


class LengthMismatch(EyeTransError):
    """Paired prediction/label lists differ in length."""


class EmptyDataset(EyeTransError):
    """Training was asked to run on zero rows."""


class EmptyTier(EyeTransError):
    """A quality tier filtered away every trial."""


class LabelOutOfRange(EyeTransError):
    """A class label or token id exceeds the configured maximum."""


class MissingDataset(EyeTransError):
    """A dataset file named in a config does not exist."""


class ConfigError(EyeTransError):
    """A config file carries a bad or missing key."""

    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


class SampleTooLong(EyeTransError):
    """A sample exceeds the model's maximum sequence length."""


class CheckpointError(EyeTransError):
    """A checkpoint file is malformed or has the wrong magic/version."""
