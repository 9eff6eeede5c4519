"""Near-field speaker detection.

Feature extraction (64-band log-mel over 25 ms windows / 10 ms hops),
250 ms / 100 ms-hop chunking, training-set construction with negative
augmentation, a reference linear-logistic chunk scorer, and the
threshold-gate-and-merge inference pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio import SAMPLE_RATE, slice_segment
from .corpus import Manifest, Segment, SpeakerRole, StopRecord
from .errors import FeatureShapeError, NearfieldError
from .metrics import WerScore, concat_wer

N_MELS = 64
FRAME_WINDOW_S = 0.025
FRAME_HOP_S = 0.010
N_FFT = 512
LOG_FLOOR = 1e-10

CHUNK_S = 0.250
CHUNK_HOP_S = 0.100

# Training-set construction gates.
UTTERANCE_SPEECH_GATE = 0.3
AUGMENT_SPEECH_GATE = 0.5
AUGMENT_MERGE_GAP_S = 1.0


class ChunkLabel(str, Enum):
    OFFICER = "officer"
    NOT_OFFICER = "not_officer"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class MelFeatures:
    """Log mel energies, shape (64, T), with the framing that produced them."""

    matrix: np.ndarray
    frame_hop_ms: int = 10
    frame_window_ms: int = 25

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class DetectorThresholds:
    """The (t_vad, t_officer, t_smooth) triple governing inference."""

    t_vad: float
    t_officer: float
    t_smooth: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_vad <= 1.0:
            raise ValueError(f"t_vad must be in [0, 1], got {self.t_vad}")
        if not 0.0 <= self.t_officer <= 1.0:
            raise ValueError(f"t_officer must be in [0, 1], got {self.t_officer}")
        if not 0.25 <= self.t_smooth <= 2.0:
            raise ValueError(f"t_smooth must be in [0.25, 2], got {self.t_smooth}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t_vad, self.t_officer, self.t_smooth)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   rate: int = SAMPLE_RATE,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular mel filters (HTK scale, peak 1) over rfft bins."""
    f_max = f_max if f_max is not None else rate / 2

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    mel_points = np.linspace(to_mel(f_min), to_mel(f_max), n_mels + 2)
    hz_points = from_mel(mel_points)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / rate)
    bank = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def mel_center_frequencies(n_mels: int = N_MELS, rate: int = SAMPLE_RATE,
                           f_max: float | None = None) -> np.ndarray:
    """Center frequency (Hz) of each mel filter."""
    f_max = f_max if f_max is not None else rate / 2
    mel_points = np.linspace(0.0, 2595.0 * np.log10(1.0 + f_max / 700.0), n_mels + 2)
    return 700.0 * (10.0 ** (mel_points[1:-1] / 2595.0) - 1.0)


_FILTERBANK = mel_filterbank()
_HANN = np.hanning(int(FRAME_WINDOW_S * SAMPLE_RATE))


def frame_mel(samples: np.ndarray, segment: Segment,
              rate: int = SAMPLE_RATE) -> MelFeatures:
    """Log-mel features for one segment; no padding, partial frames dropped."""
    chunk = slice_segment(samples, segment.start, segment.end, rate)
    frame_len = int(FRAME_WINDOW_S * rate)
    hop = int(FRAME_HOP_S * rate)
    if len(chunk) < frame_len:
        return MelFeatures(matrix=np.empty((N_MELS, 0)))
    frames = np.lib.stride_tricks.sliding_window_view(chunk, frame_len)[::hop]
    spectrum = np.abs(np.fft.rfft(frames * _HANN, n=N_FFT, axis=1)) ** 2
    mel = spectrum @ _FILTERBANK.T
    return MelFeatures(matrix=np.log(np.maximum(mel.T, LOG_FLOOR)))


def chunk_stream(duration: float) -> list[Segment]:
    """250 ms chunks on a 100 ms grid from 0; the final partial is dropped."""
    chunks = []
    duration_ms = int(round(duration * 1000))
    start_ms = 0
    while start_ms + 250 <= duration_ms:
        chunks.append(Segment(start_ms / 1000.0, (start_ms + 250) / 1000.0))
        start_ms += 100
    return chunks


def _segment_chunks(segment: Segment) -> list[Segment]:
    """250 ms / 100 ms-hop chunks inside an arbitrary segment."""
    start_ms = int(round(segment.start * 1000))
    end_ms = int(round(segment.end * 1000))
    out = []
    s = start_ms
    while s + 250 <= end_ms:
        out.append(Segment(s / 1000.0, (s + 250) / 1000.0))
        s += 100
    return out


def merge_segments(segments: Sequence[Segment], max_gap: float) -> list[Segment]:
    """Merge sorted segments whose gap (next.start - prev.end) is <= max_gap."""
    merged: list[Segment] = []
    for seg in segments:
        if merged and round(seg.start - merged[-1].end, 3) <= max_gap:
            merged[-1] = Segment(merged[-1].start, max(merged[-1].end, seg.end))
        else:
            merged.append(seg)
    return merged


# ---------------------------------------------------------------------------
# Chunk scoring and inference


@dataclass(frozen=True)
class ChunkScore:
    segment: Segment
    vad: float
    officer: float


@dataclass(frozen=True)
class DetectedSegment:
    segment: Segment
    vad: float
    officer: float


def score_chunks(samples: np.ndarray, vad, officer_scorer,
                 rate: int = SAMPLE_RATE) -> list[ChunkScore]:
    """Score every stream chunk with both scorers (threshold-independent)."""
    out = []
    for chunk in chunk_stream(len(samples) / rate):
        features = frame_mel(samples, chunk, rate)
        out.append(ChunkScore(segment=chunk,
                              vad=vad.score_frames(features),
                              officer=officer_scorer.score_frames(features)))
    return out


def apply_thresholds(chunk_scores: Sequence[ChunkScore],
                     thresholds: DetectorThresholds) -> list[DetectedSegment]:
    """Strict dual gate then merge within t_smooth; scores are member means."""
    kept = [c for c in chunk_scores
            if c.vad > thresholds.t_vad and c.officer > thresholds.t_officer]
    groups: list[list[ChunkScore]] = []
    for c in kept:
        if groups and round(c.segment.start - groups[-1][-1].segment.end, 3) <= thresholds.t_smooth:
            groups[-1].append(c)
        else:
            groups.append([c])
    out = []
    for group in groups:
        seg = Segment(group[0].segment.start, max(c.segment.end for c in group))
        out.append(DetectedSegment(
            segment=seg,
            vad=float(np.mean([c.vad for c in group])),
            officer=float(np.mean([c.officer for c in group]))))
    return out


def detect_officer_segments(samples: np.ndarray, vad, officer_scorer,
                            thresholds: DetectorThresholds,
                            rate: int = SAMPLE_RATE) -> list[Segment]:
    """Full inference: chunk, dual-gate, merge. Sorted and non-overlapping."""
    scores = score_chunks(samples, vad, officer_scorer, rate)
    return [d.segment for d in apply_thresholds(scores, thresholds)]


# ---------------------------------------------------------------------------
# Training data construction


@dataclass(frozen=True)
class TrainChunk:
    stop_id: str
    segment: Segment
    label: ChunkLabel
    gain: float = 1.0


def segment_speech_score(samples: np.ndarray, segment: Segment, vad,
                         rate: int = SAMPLE_RATE) -> float:
    return vad.score_frames(frame_mel(samples, segment, rate))


def augment_negatives(stop: StopRecord, samples: np.ndarray, vad,
                      rate: int = SAMPLE_RATE) -> list[Segment]:
    """Untranscribed speech regions, for use as extra not-officer examples.

    Chunks the whole recording, keeps chunks with speech score >= 0.5,
    merges kept chunks within 1 s, then drops any merged segment that
    overlaps a transcribed utterance.
    """
    kept = []
    for chunk in chunk_stream(len(samples) / rate):
        if segment_speech_score(samples, chunk, vad, rate) >= AUGMENT_SPEECH_GATE:
            kept.append(chunk)
    merged = merge_segments(kept, AUGMENT_MERGE_GAP_S)
    transcribed = [u.segment for u in stop.utterances if u.segment is not None]
    return [seg for seg in merged
            if not any(seg.overlaps(t) for t in transcribed)]


@dataclass(frozen=True)
class TrainingDataConfig:
    per_class: int = 150_000
    seed: int = 0
    volume_augment_probability: float = 0.5
    volume_augment_range: tuple[float, float] = (0.1, 1.0)


def build_training_chunks(manifest: Manifest,
                          load_audio: Callable[[StopRecord], np.ndarray],
                          vad,
                          config: TrainingDataConfig,
                          rate: int = SAMPLE_RATE) -> list[TrainChunk]:
    """Balanced, seeded chunk sample for training the officer classifier.

    Utterances whose whole-segment speech score is < 0.3 are dropped.
    Chunks from primary-officer utterances are positives; everything else
    (other speakers and augmented untranscribed regions) is negative.
    Sampled chunks get attenuation-only volume augmentation: with
    probability 0.5, gain drawn log-uniformly from [0.1, 1.0].
    """
    pools: dict[ChunkLabel, list[TrainChunk]] = {
        ChunkLabel.OFFICER: [], ChunkLabel.NOT_OFFICER: []}
    for stop in manifest.stops:
        samples = load_audio(stop)
        for utt in stop.utterances:
            if utt.segment is None:
                continue
            if segment_speech_score(samples, utt.segment, vad, rate) < UTTERANCE_SPEECH_GATE:
                continue
            label = (ChunkLabel.OFFICER
                     if utt.speaker_role is SpeakerRole.PRIMARY_OFFICER
                     else ChunkLabel.NOT_OFFICER)
            for chunk in _segment_chunks(utt.segment):
                pools[label].append(TrainChunk(stop.stop_id, chunk, label))
        for seg in augment_negatives(stop, samples, vad, rate):
            for chunk in _segment_chunks(seg):
                pools[ChunkLabel.NOT_OFFICER].append(
                    TrainChunk(stop.stop_id, chunk, ChunkLabel.NOT_OFFICER))

    for label, pool in pools.items():
        if not pool:
            raise NearfieldError(f"no training chunks for class {label.value!r}")

    rng = np.random.default_rng(config.seed)
    sampled: list[TrainChunk] = []
    lo, hi = config.volume_augment_range
    for label in (ChunkLabel.OFFICER, ChunkLabel.NOT_OFFICER):
        pool = pools[label]
        if len(pool) > config.per_class:
            chosen_idx = rng.choice(len(pool), size=config.per_class, replace=False)
            chosen = [pool[i] for i in sorted(chosen_idx)]
        else:
            chosen = list(pool)
        for chunk in chosen:
            if rng.random() < config.volume_augment_probability:
                gain = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            else:
                gain = 1.0
            sampled.append(TrainChunk(chunk.stop_id, chunk.segment, chunk.label, gain))
    return sampled


def pooled_features(mel: MelFeatures) -> np.ndarray:
    """Fixed-size summary: per-mel-bin mean and std over frames (128 values)."""
    if mel.matrix.shape[0] != N_MELS or mel.n_frames == 0:
        raise FeatureShapeError(
            f"expected ({N_MELS}, T>=1) features, got {mel.matrix.shape}")
    return np.concatenate([mel.matrix.mean(axis=1), mel.matrix.std(axis=1)])


def chunk_feature_matrix(chunks: Sequence[TrainChunk],
                         load_audio: Callable[[str], np.ndarray],
                         rate: int = SAMPLE_RATE) -> tuple[np.ndarray, np.ndarray]:
    """Pooled features (with volume gains applied) and 0/1 labels."""
    rows, labels = [], []
    for chunk in chunks:
        samples = load_audio(chunk.stop_id)
        piece = slice_segment(samples, chunk.segment.start, chunk.segment.end, rate)
        mel = frame_mel(piece * chunk.gain, Segment(0, chunk.segment.duration), rate)
        rows.append(pooled_features(mel))
        labels.append(1.0 if chunk.label is ChunkLabel.OFFICER else 0.0)
    return np.asarray(rows), np.asarray(labels)


# ---------------------------------------------------------------------------
# Reference chunk scorer


@dataclass
class LinearChunkScorer:
    """Logistic regression over pooled mel features; outputs in [0, 1]."""

    weights: np.ndarray
    bias: float

    def score_pooled(self, pooled: np.ndarray) -> float:
        z = float(pooled @ self.weights + self.bias)
        return float(1.0 / (1.0 + np.exp(-z)))

    def score_frames(self, features: MelFeatures) -> float:
        return self.score_pooled(pooled_features(features))

    def save(self, path: str | Path) -> None:
        payload = {
            "kind": "reference_linear",
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "feature_spec": {"n_mels": N_MELS, "pooling": "mean_std",
                             "frame_hop_ms": 10, "frame_window_ms": 25},
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearChunkScorer":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(weights=np.asarray(payload["weights"]), bias=float(payload["bias"]))


def train_chunk_scorer(features: np.ndarray, labels: np.ndarray,
                       learning_rate: float = 1.0,
                       max_epochs: int = 500,
                       tol: float = 1e-6) -> tuple[LinearChunkScorer, list[float]]:
    """Fit the reference scorer by full-batch gradient descent.

    Features are standardized internally and the scaling folded back into
    the returned weights, so the scorer applies to raw pooled features.
    Returns the scorer and the per-epoch loss history.
    """
    y = np.asarray(labels, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise NearfieldError("training requires both classes present")
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0
    xs = (x - mean) / std

    w = np.zeros(xs.shape[1])
    b = 0.0
    history: list[float] = []
    prev = np.inf
    for _ in range(max_epochs):
        z = xs @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        eps = 1e-12
        loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
        history.append(loss)
        if np.isfinite(prev) and abs(prev - loss) / max(prev, 1e-12) < tol:
            break
        prev = loss
        grad_w = xs.T @ (p - y) / len(y)
        grad_b = float(np.mean(p - y))
        w -= learning_rate * grad_w
        b -= learning_rate * grad_b

    raw_w = w / std
    raw_b = b - float((w * mean / std).sum())
    return LinearChunkScorer(weights=raw_w, bias=raw_b), history


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class DetectionEval:
    wer: WerScore
    transcription_failures: int

    @property
    def s_rate(self) -> float:
        return self.wer.substitution_rate

    @property
    def d_rate(self) -> float:
        return self.wer.deletion_rate

    @property
    def i_rate(self) -> float:
        return self.wer.insertion_rate


def evaluate_detection(detected: Sequence[Segment], stop: StopRecord,
                       transcriber, audio_path: str | Path) -> DetectionEval:
    """Concatenated-WER of transcribed detections vs primary-officer speech."""
    refs = sorted(
        ((u.segment, u.raw_text) for u in stop.utterances
         if u.segment is not None and u.speaker_role is SpeakerRole.PRIMARY_OFFICER),
        key=lambda pair: pair[0].start)
    hyps = []
    failures = 0
    for seg in sorted(detected, key=lambda s: s.start):
        try:
            text = transcriber.transcribe(audio_path, seg)
        except NearfieldError:
            text = ""
            failures += 1
        hyps.append((seg, text))
    score = concat_wer(refs, hyps)
    return DetectionEval(wer=score, transcription_failures=failures)


def segment_f1(detected: Sequence[Segment], truth: Sequence[Segment],
               min_coverage: float = 0.5) -> tuple[float, float, float]:
    """Coverage-based segment F1.

    A truth segment is recalled when detections cover >= min_coverage of
    it; a detected segment is precise when truth covers >= min_coverage of
    it. Returns (f1, precision, recall).
    """

    def covered_fraction(seg: Segment, others: Sequence[Segment]) -> float:
        return sum(seg.intersection(o) for o in others) / seg.duration

    if not detected and not truth:
        return 1.0, 1.0, 1.0
    if not detected or not truth:
        return 0.0, float(not detected), float(not truth)
    precision = float(np.mean([covered_fraction(d, truth) >= min_coverage for d in detected]))
    recall = float(np.mean([covered_fraction(t, detected) >= min_coverage for t in truth]))
    if precision + recall == 0:
        return 0.0, 0.0, 0.0
    return 2 * precision * recall / (precision + recall), precision, recall
