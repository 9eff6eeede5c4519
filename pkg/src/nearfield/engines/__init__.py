"""Pluggable interfaces for external learned models.

Three engine kinds: transcribers (audio segment -> text), forced aligners
(audio segment + transcript -> word timings), and frame scorers (feature
matrix -> score in [0, 1]). Deterministic in-process mocks make the whole
pipeline testable offline; real backends attach over a line-delimited JSON
subprocess protocol.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from ..corpus import Segment
from ..detect import MelFeatures


class EngineKind(str, Enum):
    TRANSCRIBER = "transcriber"
    FORCED_ALIGNER = "forced_aligner"
    FRAME_SCORER = "frame_scorer"


class Transport(str, Enum):
    IN_PROCESS_MOCK = "in_process_mock"
    SUBPROCESS = "subprocess"


@dataclass(frozen=True)
class EngineDescriptor:
    name: str
    kind: EngineKind
    transport: Transport


@dataclass(frozen=True)
class WordTiming:
    """One aligned word; timings from a single call never overlap."""

    word: str
    start: float
    end: float

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError(f"word timing must have end > start, got {self}")


class Transcriber(ABC):
    @abstractmethod
    def transcribe(self, audio_path: str | Path, segment: Segment) -> str:
        """Hypothesis text for the segment; may be empty."""


class ForcedAligner(ABC):
    @abstractmethod
    def force_align(self, audio_path: str | Path, segment: Segment,
                    transcript: str) -> list[WordTiming]:
        """One timing per normalized transcript token, inside the segment."""


class FrameScorer(ABC):
    @abstractmethod
    def score_frames(self, features: MelFeatures) -> float:
        """Score in [0, 1] for one chunk's feature matrix."""


def check_word_timings(timings: list[WordTiming], segment: Segment,
                       n_tokens: int) -> list[WordTiming]:
    """Validate the force_align postcondition; returns the timings."""
    if len(timings) != n_tokens:
        raise ValueError(f"expected {n_tokens} timings, got {len(timings)}")
    prev_end = None
    for t in timings:
        if t.start < segment.start - 1e-9 or t.end > segment.end + 1e-9:
            raise ValueError(f"timing {t} outside segment {segment}")
        if prev_end is not None and t.start < prev_end - 1e-9:
            raise ValueError("word timings overlap")
        prev_end = t.end
    return timings
