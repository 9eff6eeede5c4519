"""Synthetic-corpus generation.

Stands in for field recordings: renders pseudo-speech scenes (near-field
and far-field speakers over a noise floor) together with exact ground
truth, in the standard WAV + JSONL manifest formats. Transcriber-style
integer second marks are derived from the true times by floor/ceil,
reproducing the 1-second granularity of hand annotations.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, write_wav
from .corpus import (
    Gender,
    Manifest,
    Race,
    Segment,
    SpeakerRole,
    StopRecord,
    Utterance,
    save_manifest,
)
from .errors import NearfieldError
from .signals import DEFAULT_VOCABULARY, encode_utterance, utterance_duration_s


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class SpeakerSpec:
    """One scene participant: role, loudness, and how much they say."""

    role: SpeakerRole
    gain: float
    utterance_count: int
    min_words: int = 2
    max_words: int = 6

    def __post_init__(self) -> None:
        if not 0.0 < self.gain <= 1.0:
            raise ValueError(f"gain must be in (0, 1], got {self.gain}")
        if self.utterance_count < 1:
            raise ValueError("utterance_count must be positive")


@dataclass(frozen=True)
class SceneSpec:
    duration_s: float
    speakers: tuple[SpeakerSpec, ...]
    noise_floor: float = 0.0
    overlap_probability: float = 0.0
    gap_range_s: tuple[float, float] = (0.05, 0.35)
    lead_in_s: float = 0.5
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.overlap_probability <= 1.0:
            raise ValueError("overlap_probability must be in [0, 1]")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be non-negative")


@dataclass(frozen=True)
class GeneratedStop:
    stop: StopRecord
    samples: np.ndarray


def generate_stop(spec: SceneSpec, stop_id: str,
                  audio_path: str,
                  primary_officer_ids: frozenset[str] = frozenset({"officer-0"}),
                  all_officer_ids: frozenset[str] | None = None,
                  driver_race: Race = Race.UNKNOWN,
                  driver_gender: Gender = Gender.UNKNOWN,
                  officer_race: Race = Race.UNKNOWN,
                  officer_gender: Gender = Gender.UNKNOWN) -> GeneratedStop:
    """Render one stop; ground-truth segments land in the manifest record.

    Primary-officer utterances render at gain 1.0 regardless of their
    speaker spec; everyone else at their configured gain. Word content,
    placement, and noise are all driven by the scene seed.
    """
    rng = np.random.default_rng(spec.seed)
    all_officer_ids = all_officer_ids or primary_officer_ids

    # Interleave speakers into one conversation order.
    slots: list[SpeakerSpec] = []
    for speaker in spec.speakers:
        slots.extend([speaker] * speaker.utterance_count)
    rng.shuffle(slots)  # type: ignore[arg-type]

    n_samples = int(round(spec.duration_s * SAMPLE_RATE))
    if spec.noise_floor > 0:
        samples = rng.normal(0.0, spec.noise_floor, n_samples)
    else:
        samples = np.zeros(n_samples)

    utterances: list[Utterance] = []
    cursor = spec.lead_in_s + rng.uniform(0.0, 0.5)
    prev_duration = 0.0
    for i, speaker in enumerate(slots):
        n_words = int(rng.integers(speaker.min_words, speaker.max_words + 1))
        words = [spec.vocabulary[int(k)]
                 for k in rng.integers(0, len(spec.vocabulary), n_words)]
        duration = utterance_duration_s(n_words)
        start = cursor
        if i > 0 and rng.random() < spec.overlap_probability:
            start = max(0.0, cursor - rng.uniform(0.1, 0.6) * prev_duration)
        end = start + duration
        if end > spec.duration_s - 0.1:
            raise NearfieldError(
                f"stop {stop_id!r}: utterances do not fit in {spec.duration_s}s "
                f"(needed past {end:.2f}s)")
        gain = 1.0 if speaker.role is SpeakerRole.PRIMARY_OFFICER else speaker.gain
        signal = encode_utterance(words, spec.vocabulary) * gain
        # Millisecond-rounded segment also fixes the sample offset exactly
        # (1 ms is 16 samples), so audio sits precisely inside the truth.
        segment = Segment(start, end)
        offset = int(round(segment.start * SAMPLE_RATE))
        samples[offset:offset + len(signal)] += signal
        utterances.append(Utterance(
            id=f"{stop_id}-u{i:03d}",
            speaker_role=speaker.role,
            raw_text=" ".join(words),
            raw_start_s=int(math.floor(segment.start)),
            raw_end_s=int(math.ceil(segment.end)),
            segment=segment,
        ))
        cursor = end + rng.uniform(*spec.gap_range_s)
        prev_duration = duration

    samples = np.clip(samples, -1.0, 1.0)
    stop = StopRecord(
        stop_id=stop_id,
        audio_path=audio_path,
        primary_officer_ids=primary_officer_ids,
        all_officer_ids=all_officer_ids,
        driver_race=driver_race,
        driver_gender=driver_gender,
        officer_race=officer_race,
        officer_gender=officer_gender,
        utterances=tuple(utterances),
    )
    return GeneratedStop(stop=stop, samples=samples)


@dataclass(frozen=True)
class CorpusSpec:
    """Knobs for a whole synthetic corpus."""

    n_stops: int
    duration_s: float = 40.0
    speakers: tuple[SpeakerSpec, ...] = (
        SpeakerSpec(role=SpeakerRole.PRIMARY_OFFICER, gain=1.0, utterance_count=6),
        SpeakerSpec(role=SpeakerRole.COMMUNITY_MEMBER, gain=0.2, utterance_count=5),
    )
    noise_floor: float = 0.01
    overlap_probability: float = 0.0
    officer_pool_size: int = 12
    secondary_officer_probability: float = 0.3
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    seed: int = 0


def generate_corpus(spec: CorpusSpec, out_dir: str | Path) -> Manifest:
    """Generate stops + WAVs under out_dir and write manifest.jsonl.

    Driver race and gender alternate deterministically so race-balanced
    test splits stay feasible; officers draw from a small pool so the
    withholding logic gets exercised.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    races = (Race.BLACK, Race.WHITE)
    genders = (Gender.MALE, Gender.FEMALE)

    pool_rng = np.random.default_rng(_stable_seed(spec.seed, "officers"))
    stops: list[StopRecord] = []
    for i in range(spec.n_stops):
        stop_id = f"stop-{i:04d}"
        primary = f"officer-{int(pool_rng.integers(0, spec.officer_pool_size))}"
        officers = {primary}
        if pool_rng.random() < spec.secondary_officer_probability:
            officers.add(f"officer-{int(pool_rng.integers(0, spec.officer_pool_size))}")
        scene = SceneSpec(
            duration_s=spec.duration_s,
            speakers=spec.speakers,
            noise_floor=spec.noise_floor,
            overlap_probability=spec.overlap_probability,
            vocabulary=spec.vocabulary,
            seed=_stable_seed(spec.seed, "scene", i),
        )
        generated = generate_stop(
            scene, stop_id,
            audio_path=f"audio/{stop_id}.wav",
            primary_officer_ids=frozenset({primary}),
            all_officer_ids=frozenset(officers),
            driver_race=races[i % 2],
            driver_gender=genders[(i // 2) % 2],
            officer_race=races[(i // 3) % 2],
            officer_gender=genders[i % 2],
        )
        write_wav(audio_dir / f"{stop_id}.wav", generated.samples)
        stops.append(generated.stop)

    manifest = Manifest(stops=tuple(stops))
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
