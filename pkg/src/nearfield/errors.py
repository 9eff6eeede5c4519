"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class NearfieldError(Exception):
    """Base class for all toolkit errors."""


class ManifestError(NearfieldError):
    """Manifest parsing or invariant violation.

    Carries enough context (line number, stop id, field) to locate the
    offending record in a JSONL file.
    """

    def __init__(self, message: str, *, line: int | None = None,
                 stop_id: str | None = None, field: str | None = None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if stop_id is not None:
            parts.append(f"stop {stop_id!r}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = " / ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.stop_id = stop_id
        self.field = field


class InfeasibleSplitError(NearfieldError):
    """Requested split constraints cannot be met; reports achievable counts."""

    def __init__(self, message: str, achievable: dict[str, int] | None = None):
        super().__init__(message)
        self.achievable = achievable or {}


class AudioFormatError(NearfieldError):
    """Audio file is not 16-bit PCM mono at the required rate."""


class EngineError(NearfieldError):
    """Base class for engine failures."""

    def __init__(self, message: str, engine: str | None = None):
        super().__init__(f"[{engine}] {message}" if engine else message)
        self.engine = engine


class EngineUnavailableError(EngineError):
    """Engine process is gone, timed out, or never came up."""


class SegmentOutOfBoundsError(EngineError):
    """Requested segment exceeds the audio duration."""


class AlignmentFailureError(EngineError):
    """Forced aligner could not align the transcript to the segment."""


class FeatureShapeError(EngineError):
    """Feature matrix does not match the scorer's declared input shape."""


class ScoringError(NearfieldError):
    """Utterance is missing the scores a filter criterion requires."""


class UnalignableUtteranceError(NearfieldError):
    """Every transcription attempt failed for every candidate."""


class ObjectiveEvaluationError(NearfieldError):
    """Tuning objective raised; carries the offending point."""

    def __init__(self, message: str, point: tuple[float, ...]):
        super().__init__(f"{message} at point {point}")
        self.point = point


class ConfigError(NearfieldError):
    """Pipeline configuration failed validation."""
