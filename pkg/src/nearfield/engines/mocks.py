"""Deterministic in-process engines.

These are pure functions of their inputs and seeds: the table and
signature transcribers, a seeded word-dropout wrapper, uniform and
ground-truth-jitter aligners, and the energy VAD. Together they let every
pipeline stage run and be scored with no external models.
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np

from ..audio import read_wav, slice_segment
from ..corpus import Manifest, Segment
from ..detect import LOG_FLOOR, N_MELS, MelFeatures
from ..errors import AlignmentFailureError, EngineError, FeatureShapeError
from ..signals import DEFAULT_VOCABULARY, WORD_SLOT_S, decode_words, word_signal_span
from ..textnorm import normalize
from . import ForcedAligner, FrameScorer, Transcriber, WordTiming, check_word_timings


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


class _AudioCache:
    """Per-engine cache of decoded wav files."""

    def __init__(self) -> None:
        self._cache: dict[str, np.ndarray] = {}

    def get(self, path: str | Path) -> np.ndarray:
        key = str(path)
        if key not in self._cache:
            self._cache[key] = read_wav(key)
        return self._cache[key]


class TableTranscriber(Transcriber):
    """Returns canned text keyed by (audio basename, segment at ms precision)."""

    def __init__(self, table: dict[tuple[str, float, float], str],
                 default: str = ""):
        self.table = {(name, round(s, 3), round(e, 3)): text
                      for (name, s, e), text in table.items()}
        self.default = default
        self._audio = _AudioCache()

    def transcribe(self, audio_path: str | Path, segment: Segment) -> str:
        samples = self._audio.get(audio_path)
        slice_segment(samples, segment.start, segment.end, engine="table")
        key = (Path(audio_path).name, segment.start, segment.end)
        return self.table.get(key, self.default)


class SignatureTranscriber(Transcriber):
    """Echo transcriber: decodes pseudo-speech signatures from the audio."""

    def __init__(self, vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY):
        self.vocabulary = tuple(vocabulary)
        self._audio = _AudioCache()

    def transcribe(self, audio_path: str | Path, segment: Segment) -> str:
        samples = self._audio.get(audio_path)
        piece = slice_segment(samples, segment.start, segment.end, engine="signature")
        return " ".join(decode_words(piece, self.vocabulary))


class DegradingTranscriber(Transcriber):
    """Wraps a transcriber with seeded word dropout.

    Dropout decisions depend only on (seed, audio, segment, word position),
    so repeated calls return byte-identical hypotheses.
    """

    def __init__(self, inner: Transcriber, dropout: float = 0.5, seed: int = 0):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        self.inner = inner
        self.dropout = dropout
        self.seed = seed

    def transcribe(self, audio_path: str | Path, segment: Segment) -> str:
        text = self.inner.transcribe(audio_path, segment)
        words = text.split()
        rng = np.random.default_rng(
            _stable_seed(self.seed, Path(audio_path).name,
                         round(segment.start, 3), round(segment.end, 3)))
        kept = [w for w in words if rng.random() >= self.dropout]
        return " ".join(kept)


class UniformAligner(ForcedAligner):
    """Splits the query segment evenly across the transcript tokens."""

    def force_align(self, audio_path: str | Path, segment: Segment,
                    transcript: str) -> list[WordTiming]:
        if not transcript.strip():
            raise ValueError("transcript must be non-empty")
        tokens = normalize(transcript).tokens
        if not tokens:
            raise AlignmentFailureError("transcript has no tokens after normalization",
                                        engine="uniform")
        width = segment.duration / len(tokens)
        timings = [
            WordTiming(word=tok,
                       start=round(segment.start + i * width, 6),
                       end=round(segment.start + (i + 1) * width, 6))
            for i, tok in enumerate(tokens)]
        return check_word_timings(timings, segment, len(tokens))


class TruthJitterAligner(ForcedAligner):
    """Emulates a competent aligner using the generator's word timeline.

    Built from a ground-truth manifest: locates the transcript's token
    sequence on the per-file word timeline, then returns those true word
    spans with a small seeded jitter. Fails (like a real aligner) when the
    token sequence cannot be found.
    """

    def __init__(self, timeline: dict[str, list[tuple[str, float, float]]],
                 jitter_s: float = 0.02, seed: int = 0):
        self.timeline = {k: sorted(v, key=lambda w: w[1]) for k, v in timeline.items()}
        self.jitter_s = jitter_s
        self.seed = seed

    @classmethod
    def from_manifest(cls, manifest: Manifest, jitter_s: float = 0.02,
                      seed: int = 0) -> "TruthJitterAligner":
        timeline: dict[str, list[tuple[str, float, float]]] = {}
        for stop in manifest.stops:
            words: list[tuple[str, float, float]] = []
            for utt in stop.utterances:
                if utt.segment is None:
                    continue
                tokens = normalize(utt.raw_text).tokens
                for pos, tok in enumerate(tokens):
                    s, e = word_signal_span(utt.segment.start, pos)
                    words.append((tok, s, e))
            timeline[Path(stop.audio_path).name] = words
        return cls(timeline, jitter_s=jitter_s, seed=seed)

    def force_align(self, audio_path: str | Path, segment: Segment,
                    transcript: str) -> list[WordTiming]:
        if not transcript.strip():
            raise ValueError("transcript must be non-empty")
        tokens = normalize(transcript).tokens
        if not tokens:
            raise AlignmentFailureError("no tokens after normalization", engine="truth_jitter")
        words = self.timeline.get(Path(audio_path).name)
        if words is None:
            raise AlignmentFailureError(f"no timeline for {audio_path}", engine="truth_jitter")
        # Candidate runs must sit near the query segment; pick the best overlap.
        best_run = None
        best_overlap = -1.0
        for i in range(len(words) - len(tokens) + 1):
            run = words[i:i + len(tokens)]
            if [w[0] for w in run] != list(tokens):
                continue
            overlap = (min(segment.end, run[-1][2]) - max(segment.start, run[0][1]))
            if overlap > best_overlap:
                best_overlap = overlap
                best_run = run
        if best_run is None or best_overlap <= 0:
            raise AlignmentFailureError("transcript not found on word timeline",
                                        engine="truth_jitter")
        rng = np.random.default_rng(
            _stable_seed(self.seed, Path(audio_path).name,
                         round(segment.start, 3), round(segment.end, 3)))
        # Jitter below half the inter-word gap keeps timings non-overlapping.
        j = min(self.jitter_s, (WORD_SLOT_S - 0.25) / 2 - 1e-3)
        timings = []
        for tok, s, e in best_run:
            s2 = max(segment.start, s + rng.uniform(-j, j))
            e2 = min(segment.end, e + rng.uniform(-j, j))
            timings.append(WordTiming(word=tok, start=round(s2, 6), end=round(e2, 6)))
        return check_word_timings(timings, segment, len(tokens))


class FailingAligner(ForcedAligner):
    """Always fails; exercises per-method fallback paths."""

    def force_align(self, audio_path, segment, transcript) -> list[WordTiming]:
        if not transcript.strip():
            raise ValueError("transcript must be non-empty")
        raise AlignmentFailureError("configured to fail", engine="failing")


class EnergyVad(FrameScorer):
    """Mean per-frame log-energy through a calibrated logistic.

    Calibrated against the synthetic corpus levels: digital silence scores
    exactly 0, a 0.01-amplitude noise floor ~0.24, far-field (gain 0.2)
    speech ~0.9, and full-scale noise ~1.0.
    """

    def __init__(self, center: float = 2.0, scale: float = 0.6):
        self.center = center
        self.scale = scale

    def score_frames(self, features: MelFeatures) -> float:
        matrix = features.matrix
        if matrix.shape[0] != N_MELS:
            raise FeatureShapeError(
                f"expected {N_MELS} mel bins, got {matrix.shape[0]}", engine="energy_vad")
        if matrix.shape[1] == 0:
            return 0.0
        floor = math.log(LOG_FLOOR)
        if np.all(matrix <= floor + 1e-9):
            return 0.0
        frame_energy = np.log(np.exp(matrix).sum(axis=0))
        mean_log_energy = float(frame_energy.mean())
        return float(1.0 / (1.0 + math.exp(-(mean_log_energy - self.center) / self.scale)))


class ConstantScorer(FrameScorer):
    """Fixed score regardless of input; for threshold-path tests."""

    def __init__(self, value: float):
        if not 0.0 <= value <= 1.0:
            raise EngineError(f"constant score must be in [0, 1], got {value}")
        self.value = value

    def score_frames(self, features: MelFeatures) -> float:
        if features.matrix.shape[0] != N_MELS:
            raise FeatureShapeError(
                f"expected {N_MELS} mel bins, got {features.matrix.shape[0]}",
                engine="constant")
        return self.value
