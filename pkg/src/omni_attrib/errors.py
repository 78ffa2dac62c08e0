"""Exception taxonomy shared across the toolkit.

Every failure mode named by a module contract gets its own class so callers
(and the CLI's exit-code mapping) can tell them apart without string matching.
"""

from __future__ import annotations


class OmniAttribError(Exception):
    """Base class for all toolkit errors."""


class EmptyRosterError(OmniAttribError):
    """No participant boxes were supplied where at least one is required."""


class ZeroEmbeddingError(OmniAttribError):
    """A zero-norm embedding makes cosine similarity undefined."""


class DimensionMismatchError(OmniAttribError):
    """Two vectors that must share a dimension do not."""


class UnknownParticipantError(OmniAttribError):
    """A roster id is absent from the reference bank."""

    def __init__(self, participant: str):
        super().__init__(f"unknown participant: {participant}")
        self.participant = participant


class DuplicateParticipantError(OmniAttribError):
    """A bank manifest lists the same participant twice."""


class MissingMediaError(OmniAttribError):
    """A manifest references a media file that does not exist."""

    def __init__(self, path: str):
        super().__init__(f"missing media file: {path}")
        self.path = path


class MalformedRecordError(OmniAttribError):
    """A manifest or sidecar record does not match its schema."""


class MissingInputError(OmniAttribError):
    """A prompt mode requires an input that was not provided."""


class MissingAnswerError(OmniAttribError):
    """Model output contains no answer tag."""

    def __init__(self, raw: str):
        super().__init__("no <answer> tag in model output")
        self.raw = raw


class MalformedAnswerError(OmniAttribError):
    """The answer tag content does not parse as a participant id."""

    def __init__(self, answer_text: str, raw: str):
        super().__init__(f"answer is not a PlayerN id: {answer_text!r}")
        self.answer_text = answer_text
        self.raw = raw


class ClientError(OmniAttribError):
    """Transport-level failure from a reasoning-model client."""


class InvalidTransitionError(OmniAttribError):
    """A review decision was applied to a trace not in the pending state."""


class RevisionValidationError(OmniAttribError):
    """A revise decision carried no usable revisions."""


class ConfigError(OmniAttribError):
    """A configuration value is out of range or otherwise unusable."""


class UnknownConfigKeyError(ConfigError):
    """A training-config override names a field that does not exist."""

    def __init__(self, key: str):
        super().__init__(f"unknown config key: {key}")
        self.key = key


class ZeroPowerSignalError(OmniAttribError):
    """Noise injection at finite SNR is undefined for an all-zero signal."""


class MetricUndefinedError(OmniAttribError):
    """An accuracy is N/A (empty match set) where a number was required."""
