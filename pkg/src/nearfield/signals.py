"""Tone-complex pseudo-speech codec.

Synthetic corpora render each word as a two-tone complex under a Hann
envelope: the word's codebook index selects one frequency from a low band
and one from a high band. The mapping is exactly invertible from clean
audio, which lets a mock transcriber recover the words actually present in
any queried span — so alignment selection, detection, and end-to-end WER
can be tested without any external model.

Layout: each word occupies a 300 ms slot (250 ms signal + 50 ms silence);
an utterance is its words' slots back to back, minus the trailing silence.
"""

from __future__ import annotations

import numpy as np

from .audio import SAMPLE_RATE

WORD_SIGNAL_S = 0.25
WORD_GAP_S = 0.05
WORD_SLOT_S = WORD_SIGNAL_S + WORD_GAP_S

LO_BASE_HZ, LO_STEP_HZ, N_LO = 500.0, 100.0, 8
HI_BASE_HZ, HI_STEP_HZ, N_HI = 2000.0, 150.0, 8
MAX_VOCABULARY = N_LO * N_HI

TONE_AMPLITUDE = 0.35

# 64 words; positions are codebook indices, so order is part of the codec.
DEFAULT_VOCABULARY: tuple[str, ...] = (
    "okay", "yeah", "no", "yes", "stop", "hold", "on", "please", "thank", "you",
    "sir", "ma'am", "license", "registration", "insurance", "vehicle", "plate",
    "driver", "window", "door", "step", "out", "hands", "wheel", "slow", "down",
    "speed", "limit", "light", "signal", "lane", "turn", "road", "traffic",
    "citation", "warning", "ticket", "court", "sign", "here", "name", "address",
    "birth", "day", "today", "tonight", "morning", "going", "coming", "from",
    "where", "what", "why", "how", "long", "fast", "red", "green", "pulled",
    "over", "just", "moment", "right", "back",
)

_DECODE_MIN_REGION_S = 0.10
_DECODE_ABS_FLOOR = 0.02
_DECODE_REL_THRESHOLD = 0.35
_LO_TOLERANCE_HZ = 40.0
_HI_TOLERANCE_HZ = 60.0


def word_frequencies(index: int) -> tuple[float, float]:
    """Low/high tone frequencies for a codebook index."""
    if not 0 <= index < MAX_VOCABULARY:
        raise ValueError(f"codebook index out of range: {index}")
    return (LO_BASE_HZ + LO_STEP_HZ * (index % N_LO),
            HI_BASE_HZ + HI_STEP_HZ * (index // N_LO))


def word_waveform(index: int, rate: int = SAMPLE_RATE) -> np.ndarray:
    """The 250 ms two-tone signature for one codebook index."""
    n = int(round(WORD_SIGNAL_S * rate))
    t = np.arange(n) / rate
    f_lo, f_hi = word_frequencies(index)
    envelope = np.hanning(n)
    wave = np.sin(2 * np.pi * f_lo * t) + np.sin(2 * np.pi * f_hi * t)
    return (TONE_AMPLITUDE * envelope * wave).astype(np.float64)


def utterance_duration_s(n_words: int) -> float:
    if n_words < 1:
        raise ValueError("an utterance needs at least one word")
    return round(n_words * WORD_SLOT_S - WORD_GAP_S, 3)


def encode_utterance(words: list[str] | tuple[str, ...],
                     vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY,
                     rate: int = SAMPLE_RATE) -> np.ndarray:
    """Render words as back-to-back signatures; raises on unknown words."""
    if len(vocabulary) > MAX_VOCABULARY:
        raise ValueError(f"vocabulary larger than codebook ({len(vocabulary)} > {MAX_VOCABULARY})")
    index = {w: i for i, w in enumerate(vocabulary)}
    slot = int(round(WORD_SLOT_S * rate))
    signal_len = int(round(WORD_SIGNAL_S * rate))
    total = slot * len(words) - int(round(WORD_GAP_S * rate))
    out = np.zeros(total, dtype=np.float64)
    for k, word in enumerate(words):
        if word not in index:
            raise ValueError(f"word {word!r} not in vocabulary")
        out[k * slot:k * slot + signal_len] = word_waveform(index[word], rate)
    return out


def word_signal_span(utterance_start_s: float, word_position: int) -> tuple[float, float]:
    """True [start, end] of the signal part of a word slot."""
    start = utterance_start_s + word_position * WORD_SLOT_S
    return (round(start, 3), round(start + WORD_SIGNAL_S, 3))


def _active_regions(samples: np.ndarray, rate: int) -> list[tuple[int, int]]:
    frame_len = int(0.025 * rate)
    hop = int(0.010 * rate)
    if len(samples) < frame_len:
        return []
    n_frames = (len(samples) - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    rms = np.sqrt(np.mean(samples[idx] ** 2, axis=1))
    peak = float(rms.max())
    if peak < _DECODE_ABS_FLOOR:
        return []
    active = rms > max(_DECODE_ABS_FLOOR, _DECODE_REL_THRESHOLD * peak)
    regions: list[tuple[int, int]] = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            regions.append((start * hop, (i - 1) * hop + frame_len))
            start = None
    if start is not None:
        regions.append((start * hop, (len(active) - 1) * hop + frame_len))
    return regions


def _quantize(freq: float, base: float, step: float, count: int, tol: float) -> int | None:
    k = int(round((freq - base) / step))
    if 0 <= k < count and abs(freq - (base + k * step)) <= tol:
        return k
    return None


def _peak_frequency(spectrum: np.ndarray, freqs: np.ndarray, lo: float, hi: float) -> float | None:
    band = (freqs >= lo) & (freqs <= hi)
    if not band.any():
        return None
    mags = np.abs(spectrum[band])
    if mags.max() <= 0:
        return None
    return float(freqs[band][int(np.argmax(mags))])


def decode_words(samples: np.ndarray,
                 vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY,
                 rate: int = SAMPLE_RATE) -> list[str]:
    """Recover the word sequence audible in the samples.

    Words clipped to under ~40% of their signature, regions quieter than
    35% of the loudest region, and anything but pure signatures decode to
    nothing — a loud speaker can therefore mask a much quieter one inside
    the same query span.
    """
    words: list[str] = []
    min_len = int(_DECODE_MIN_REGION_S * rate)
    for i0, i1 in _active_regions(np.asarray(samples, dtype=np.float64), rate):
        if i1 - i0 < min_len:
            continue
        region = samples[i0:i1]
        n_fft = max(2048, 1 << int(np.ceil(np.log2(len(region)))))
        spectrum = np.fft.rfft(region, n=n_fft)
        freqs = np.fft.rfftfreq(n_fft, d=1.0 / rate)
        f_lo = _peak_frequency(spectrum, freqs,
                               LO_BASE_HZ - 80, LO_BASE_HZ + LO_STEP_HZ * (N_LO - 1) + 80)
        f_hi = _peak_frequency(spectrum, freqs,
                               HI_BASE_HZ - 100, HI_BASE_HZ + HI_STEP_HZ * (N_HI - 1) + 100)
        if f_lo is None or f_hi is None:
            continue
        k_lo = _quantize(f_lo, LO_BASE_HZ, LO_STEP_HZ, N_LO, _LO_TOLERANCE_HZ)
        k_hi = _quantize(f_hi, HI_BASE_HZ, HI_STEP_HZ, N_HI, _HI_TOLERANCE_HZ)
        if k_lo is None or k_hi is None:
            continue
        index = k_lo + N_LO * k_hi
        if index < len(vocabulary):
            words.append(vocabulary[index])
    return words
