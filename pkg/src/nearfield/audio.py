"""WAV I/O for 16-bit PCM mono audio.

The pipeline operates on float arrays in [-1, 1] at 16 kHz. Resampling is
out of scope: a mismatched rate raises instead of converting.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, SegmentOutOfBoundsError

SAMPLE_RATE = 16_000


def read_wav(path: str | Path, expect_rate: int | None = SAMPLE_RATE) -> np.ndarray:
    """Read a mono 16-bit PCM WAV file into float32 samples in [-1, 1]."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise AudioFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            if expect_rate is not None and rate != expect_rate:
                raise AudioFormatError(f"{path}: expected {expect_rate} Hz, got {rate} Hz")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a valid WAV file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32767.0
    return samples


def write_wav(path: str | Path, samples: np.ndarray, rate: int = SAMPLE_RATE) -> None:
    """Write float samples in [-1, 1] as mono 16-bit PCM."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def duration_s(samples: np.ndarray, rate: int = SAMPLE_RATE) -> float:
    return len(samples) / rate


def slice_segment(samples: np.ndarray, start_s: float, end_s: float,
                  rate: int = SAMPLE_RATE, engine: str | None = None) -> np.ndarray:
    """Slice [start_s, end_s) by sample index; raises when out of bounds."""
    i0 = int(round(start_s * rate))
    i1 = int(round(end_s * rate))
    if i0 < 0 or i1 > len(samples) or i0 >= i1:
        raise SegmentOutOfBoundsError(
            f"segment [{start_s:.3f}, {end_s:.3f}] outside audio of "
            f"{len(samples) / rate:.3f}s", engine=engine)
    return samples[i0:i1]
