"""Edit-distance alignment and the WER/CER variants built on it.

All scoring goes through one deterministic alignment so that the
substitution-insensitive variant (``wer_no_subs``) is well defined: when
several minimal alignments exist, the traceback prefers
match > substitution > deletion > insertion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Segment
from .textnorm import normalize, scrub_repetitions


@dataclass(frozen=True)
class EditCounts:
    """Substitutions / deletions / insertions against a reference of length N."""

    substitutions: int
    deletions: int
    insertions: int
    reference_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass(frozen=True)
class WerScore:
    """An error rate plus the counts behind it.

    ``degenerate`` marks zero-length-reference scores (value falls back to
    the insertion count); downstream regression excludes such rows.
    """

    value: float
    counts: EditCounts
    degenerate: bool = False

    @property
    def substitution_rate(self) -> float:
        n = self.counts.reference_length
        return self.counts.substitutions / n if n else 0.0

    @property
    def deletion_rate(self) -> float:
        n = self.counts.reference_length
        return self.counts.deletions / n if n else 0.0

    @property
    def insertion_rate(self) -> float:
        n = self.counts.reference_length
        return self.counts.insertions / n if n else 0.0


def edit_alignment(ref: Sequence[str], hyp: Sequence[str]) -> EditCounts:
    """Minimal unit-cost alignment with deterministic traceback.

    The traceback preference (match > substitution > deletion > insertion)
    fixes the S/D/I split among equally minimal alignments.
    """
    n, m = len(ref), len(hyp)
    # dist[i][j]: distance between ref[:i] and hyp[:j]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = dist[i], dist[i - 1]
        for j in range(1, m + 1):
            if ri == hyp[j - 1]:
                row[j] = prev[j - 1]
            else:
                row[j] = 1 + min(prev[j - 1], prev[j], row[j - 1])

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == dist[i - 1][j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == dist[i - 1][j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and here == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(subs, dels, ins, n)


def _prepare(ref: str, hyp: str, scrub_limit: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    # Repetition scrub applies to the hypothesis only, before normalization.
    ref_tokens = normalize(ref).tokens
    hyp_tokens = normalize(scrub_repetitions(hyp, limit=scrub_limit)).tokens
    return ref_tokens, hyp_tokens


def _score(counts: EditCounts, numerator: int, hyp_len: int) -> WerScore:
    n = counts.reference_length
    if n == 0:
        # Zero-length reference: value is the insertion count, flagged so
        # downstream consumers can exclude the row.
        return WerScore(value=float(hyp_len), counts=counts, degenerate=True)
    return WerScore(value=numerator / n, counts=counts)


def wer(ref: str, hyp: str, scrub_limit: int = 10) -> WerScore:
    """Word error rate (S+D+I)/N after bracket stripping and normalization."""
    ref_tokens, hyp_tokens = _prepare(ref, hyp, scrub_limit)
    counts = edit_alignment(ref_tokens, hyp_tokens)
    return _score(counts, counts.distance, len(hyp_tokens))


def wer_no_subs(ref: str, hyp: str, scrub_limit: int = 10) -> WerScore:
    """(D+I)/N over the same deterministic alignment as :func:`wer`.

    Insensitive to substitutions, so it stays low where errors come from
    the model misreading words rather than from segment boundaries.
    """
    ref_tokens, hyp_tokens = _prepare(ref, hyp, scrub_limit)
    counts = edit_alignment(ref_tokens, hyp_tokens)
    return _score(counts, counts.deletions + counts.insertions, len(hyp_tokens))


def cer(ref: str, hyp: str, scrub_limit: int = 10) -> WerScore:
    """Character error rate over the normalized form, spaces included."""
    ref_tokens, hyp_tokens = _prepare(ref, hyp, scrub_limit)
    ref_chars = list(" ".join(ref_tokens))
    hyp_chars = list(" ".join(hyp_tokens))
    counts = edit_alignment(ref_chars, hyp_chars)
    return _score(counts, counts.distance, len(hyp_chars))


def min_wer(ref: str, hyps: Sequence[str], scrub_limit: int = 10) -> tuple[WerScore, int]:
    """Lowest WER across hypotheses and the index of the first argmin."""
    if not hyps:
        raise ValueError("min_wer requires at least one hypothesis")
    best: WerScore | None = None
    best_idx = 0
    for idx, hyp in enumerate(hyps):
        score = wer(ref, hyp, scrub_limit=scrub_limit)
        if best is None or score.value < best.value:
            best, best_idx = score, idx
    assert best is not None
    return best, best_idx


def concat_wer(ref_segments: Sequence[tuple[Segment, str]],
               hyp_segments: Sequence[tuple[Segment, str]],
               scrub_limit: int = 10) -> WerScore:
    """WER of temporally concatenated texts; re-segmentation invariant."""
    for name, segs in (("ref", ref_segments), ("hyp", hyp_segments)):
        starts = [seg.start for seg, _ in segs]
        if starts != sorted(starts):
            raise ValueError(f"{name} segments must be sorted by start time")
    ref_text = " ".join(text for _, text in ref_segments)
    hyp_text = " ".join(text for _, text in hyp_segments)
    return wer(ref_text, hyp_text, scrub_limit=scrub_limit)
