"""Training-set alignment: five candidate methods and best-of selection.

Every utterance with transcriber second-marks gets up to five candidate
segments: the padded heuristic marks themselves, forced alignment from
each of two aligner engines, and chunked variants that align runs of
consecutive utterances jointly before splitting them back apart on word
timings. Candidates are scored by transcribing each one with every
configured transcriber and comparing against the reference text; the
candidate with the lowest minimum WER wins.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Manifest, Segment, StopRecord, Utterance, with_segments
from .errors import NearfieldError, UnalignableUtteranceError
from .metrics import wer, wer_no_subs
from .textnorm import normalize


class AlignmentMethod(str, Enum):
    """Canonical order doubles as the tie-break order in selection."""

    UNALIGNED = "unaligned"
    MFA = "mfa"
    MFA_CHUNKED = "mfa_chunked"
    W2V2 = "w2v2"
    W2V2_CHUNKED = "w2v2_chunked"


_METHOD_RANK = {m: i for i, m in enumerate(AlignmentMethod)}

HEURISTIC_PAD_S = 0.25
CHUNK_MAX_TOTAL_S = 20.0


@dataclass(frozen=True)
class AlignmentCandidate:
    method: AlignmentMethod
    segment: Segment
    per_engine_wer: dict[str, float] = field(default_factory=dict)

    @property
    def min_wer(self) -> float | None:
        return min(self.per_engine_wer.values()) if self.per_engine_wer else None


@dataclass(frozen=True)
class AlignedUtterance:
    utterance_id: str
    chosen: AlignmentCandidate
    candidates: tuple[AlignmentCandidate, ...]
    min_wer: float
    min_wer_no_subs: float


@dataclass
class MethodFailureReport:
    """Per-method alignment failures; methods degrade rather than abort."""

    entries: list[tuple[str, str, str]] = field(default_factory=list)

    def record(self, method: AlignmentMethod, where: str, error: Exception) -> None:
        self.entries.append((method.value, where, str(error)))

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for method, _, _ in self.entries:
            out[method] = out.get(method, 0) + 1
        return out


def heuristic_timestamps(utterances: Sequence[Utterance],
                         audio_duration_s: float | None = None,
                         pad_s: float = HEURISTIC_PAD_S) -> dict[str, Segment]:
    """Padded segments from transcriber second-marks, typos repaired.

    Repairs, in order: an end before its start becomes start + 1; a missing
    end borrows the next utterance's start (or start + 1 at the tail); a
    start earlier than its predecessor is pulled up to it. Pad of 0.25 s on
    each side, clamped to [0, audio duration]. Utterances without marks are
    skipped.
    """
    marked = [u for u in utterances if u.raw_start_s is not None]
    out: dict[str, Segment] = {}
    prev_start: float | None = None
    for idx, utt in enumerate(marked):
        start = float(utt.raw_start_s)  # type: ignore[arg-type]
        end = float(utt.raw_end_s) if utt.raw_end_s is not None else None
        if end is not None and end < start:
            end = start + 1.0
        if end is None:
            nxt = marked[idx + 1].raw_start_s if idx + 1 < len(marked) else None
            end = float(nxt) if nxt is not None and nxt > start else start + 1.0
        if prev_start is not None and start < prev_start:
            start = prev_start
            if end <= start:
                end = start + 1.0
        prev_start = start

        s = max(0.0, start - pad_s)
        e = end + pad_s
        if audio_duration_s is not None:
            e = min(e, audio_duration_s)
            if e <= s:
                # Marks beyond the audio; fall back to the trailing second.
                s = max(0.0, audio_duration_s - 1.0)
                e = audio_duration_s
        out[utt.id] = Segment(s, e)
    return out


@dataclass(frozen=True)
class Chunk:
    """Consecutive utterances aligned jointly."""

    members: tuple[tuple[Utterance, Segment], ...]
    span: Segment
    total_s: float


def chunk_utterances(items: Sequence[tuple[Utterance, Segment]],
                     max_total_s: float = CHUNK_MAX_TOTAL_S) -> list[Chunk]:
    """Greedy left-to-right grouping by summed utterance duration.

    A chunk closes when adding the next utterance would push the total past
    max_total_s (boundary inclusive); a single oversize utterance forms its
    own chunk.
    """
    chunks: list[Chunk] = []
    members: list[tuple[Utterance, Segment]] = []
    total = 0.0

    def flush() -> None:
        nonlocal members, total
        if members:
            span = Segment(members[0][1].start, members[-1][1].end)
            chunks.append(Chunk(members=tuple(members), span=span, total_s=total))
            members, total = [], 0.0

    for utt, seg in items:
        if members and total + seg.duration > max_total_s:
            flush()
        members.append((utt, seg))
        total += seg.duration
    flush()
    return chunks


def split_chunk_by_words(chunk: Chunk, word_timings: Sequence) -> dict[str, Segment]:
    """Per-utterance segments from a chunk's word-level timings.

    Timing count must equal the chunk's total token count; a mismatch is an
    alignment failure for the whole chunk. Members whose text normalizes to
    zero tokens receive no segment.
    """
    token_counts = [len(normalize(utt.raw_text).tokens) for utt, _ in chunk.members]
    if sum(token_counts) != len(word_timings):
        raise NearfieldError(
            f"word count mismatch: {len(word_timings)} timings for "
            f"{sum(token_counts)} tokens")
    out: dict[str, Segment] = {}
    pos = 0
    for (utt, _), count in zip(chunk.members, token_counts):
        if count == 0:
            continue
        words = word_timings[pos:pos + count]
        pos += count
        out[utt.id] = Segment(words[0].start, words[-1].end)
    return out


def propose_candidates(stop: StopRecord,
                       aligner_a, aligner_b,
                       audio_path: str | Path,
                       audio_duration_s: float | None = None,
                       chunk_max_s: float = CHUNK_MAX_TOTAL_S,
                       failures: MethodFailureReport | None = None,
                       ) -> dict[str, list[AlignmentCandidate]]:
    """Up to five unscored candidates per marked utterance.

    aligner_a fills the first aligner role (methods ``mfa``/``mfa_chunked``),
    aligner_b the second (``w2v2``/``w2v2_chunked``). A method that errors
    contributes nothing for the affected utterances.
    """
    failures = failures if failures is not None else MethodFailureReport()
    heuristics = heuristic_timestamps(stop.utterances, audio_duration_s)
    marked = [(u, heuristics[u.id]) for u in stop.utterances if u.id in heuristics]

    candidates: dict[str, list[AlignmentCandidate]] = {
        utt.id: [AlignmentCandidate(AlignmentMethod.UNALIGNED, seg)]
        for utt, seg in marked}

    roles = ((AlignmentMethod.MFA, AlignmentMethod.MFA_CHUNKED, aligner_a),
             (AlignmentMethod.W2V2, AlignmentMethod.W2V2_CHUNKED, aligner_b))
    for plain_method, chunked_method, aligner in roles:
        if aligner is None:
            continue
        for utt, seg in marked:
            try:
                timings = aligner.force_align(audio_path, seg, utt.raw_text)
                if timings:
                    candidates[utt.id].append(AlignmentCandidate(
                        plain_method, Segment(timings[0].start, timings[-1].end)))
            except NearfieldError as exc:
                failures.record(plain_method, utt.id, exc)
            except ValueError as exc:
                failures.record(plain_method, utt.id, exc)

        for chunk in chunk_utterances(marked, max_total_s=chunk_max_s):
            transcript = " ".join(utt.raw_text for utt, _ in chunk.members)
            where = ",".join(utt.id for utt, _ in chunk.members)
            try:
                timings = aligner.force_align(audio_path, chunk.span, transcript)
                for utt_id, seg in split_chunk_by_words(chunk, timings).items():
                    candidates[utt_id].append(AlignmentCandidate(chunked_method, seg))
            except NearfieldError as exc:
                failures.record(chunked_method, where, exc)
            except ValueError as exc:
                failures.record(chunked_method, where, exc)
    return candidates


def select_best(utterance: Utterance,
                candidates: Sequence[AlignmentCandidate],
                transcribers: Mapping[str, object],
                audio_path: str | Path) -> AlignedUtterance:
    """Score every candidate with every transcriber; lowest min-WER wins.

    Ties break by canonical method order. Raises UnalignableUtteranceError
    when no candidate obtains a single successful transcription.
    """
    if not candidates:
        raise UnalignableUtteranceError(f"{utterance.id}: no candidates")
    if not transcribers:
        raise ValueError("select_best requires at least one transcriber")

    scored: list[AlignmentCandidate] = []
    hypotheses: list[dict[str, str]] = []
    for cand in candidates:
        per_engine: dict[str, float] = {}
        hyps: dict[str, str] = {}
        for name, engine in transcribers.items():
            try:
                hyp = engine.transcribe(audio_path, cand.segment)
            except NearfieldError:
                continue
            per_engine[name] = wer(utterance.raw_text, hyp).value
            hyps[name] = hyp
        if per_engine:
            scored.append(replace(cand, per_engine_wer=per_engine))
            hypotheses.append(hyps)
    if not scored:
        raise UnalignableUtteranceError(
            f"{utterance.id}: all transcriptions failed for all candidates")

    best_idx = min(
        range(len(scored)),
        key=lambda i: (scored[i].min_wer, _METHOD_RANK[scored[i].method]))
    best = scored[best_idx]
    min_ns = min(
        wer_no_subs(utterance.raw_text, hyp).value
        for hyp in hypotheses[best_idx].values())
    return AlignedUtterance(
        utterance_id=utterance.id,
        chosen=best,
        candidates=tuple(scored),
        min_wer=best.min_wer,  # type: ignore[arg-type]
        min_wer_no_subs=min_ns,
    )


@dataclass(frozen=True)
class StopAlignment:
    stop_id: str
    aligned: dict[str, AlignedUtterance]
    skipped_no_marks: tuple[str, ...]
    unalignable: tuple[str, ...]


@dataclass(frozen=True)
class AlignmentResult:
    manifest: Manifest
    stops: tuple[StopAlignment, ...]
    failures: MethodFailureReport

    def method_frequencies(self) -> dict[str, float]:
        """Share of aligned utterances won by each method."""
        counts = {m.value: 0 for m in AlignmentMethod}
        total = 0
        for stop in self.stops:
            for aligned in stop.aligned.values():
                counts[aligned.chosen.method.value] += 1
                total += 1
        return {m: (c / total if total else 0.0) for m, c in counts.items()}

    def scores(self) -> dict[tuple[str, str], tuple[float, float]]:
        """(stop_id, utterance_id) -> (min_wer, min_wer_no_subs)."""
        out = {}
        for stop in self.stops:
            for utt_id, aligned in stop.aligned.items():
                out[(stop.stop_id, utt_id)] = (aligned.min_wer, aligned.min_wer_no_subs)
        return out


def align_stop(stop: StopRecord, aligner_a, aligner_b,
               transcribers: Mapping[str, object],
               audio_path: str | Path,
               audio_duration_s: float | None = None,
               chunk_max_s: float = CHUNK_MAX_TOTAL_S,
               ) -> tuple[StopRecord, StopAlignment, MethodFailureReport]:
    failures = MethodFailureReport()
    candidates = propose_candidates(
        stop, aligner_a, aligner_b, audio_path,
        audio_duration_s=audio_duration_s, chunk_max_s=chunk_max_s,
        failures=failures)
    aligned: dict[str, AlignedUtterance] = {}
    unalignable: list[str] = []
    skipped = tuple(u.id for u in stop.utterances if u.id not in candidates)
    for utt in stop.utterances:
        if utt.id not in candidates:
            continue
        try:
            aligned[utt.id] = select_best(utt, candidates[utt.id], transcribers, audio_path)
        except UnalignableUtteranceError:
            unalignable.append(utt.id)
    segments = {utt_id: a.chosen.segment for utt_id, a in aligned.items()}
    new_stop = with_segments(stop, segments)
    return new_stop, StopAlignment(
        stop_id=stop.stop_id, aligned=aligned,
        skipped_no_marks=skipped, unalignable=tuple(unalignable)), failures


def align_manifest(manifest: Manifest, aligner_a, aligner_b,
                   transcribers: Mapping[str, object],
                   resolve_audio,
                   chunk_max_s: float = CHUNK_MAX_TOTAL_S,
                   jobs: int = 1) -> AlignmentResult:
    """Align every stop; per-stop work is independent and parallelizable.

    resolve_audio(stop) must return (audio_path, duration_s).
    """

    def one(stop: StopRecord):
        audio_path, duration = resolve_audio(stop)
        return align_stop(stop, aligner_a, aligner_b, transcribers,
                          audio_path, duration, chunk_max_s)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, manifest.stops))
    else:
        results = [one(stop) for stop in manifest.stops]

    failures = MethodFailureReport()
    new_stops = []
    alignments = []
    for new_stop, alignment, stop_failures in results:
        new_stops.append(new_stop)
        alignments.append(alignment)
        failures.entries.extend(stop_failures.entries)
    return AlignmentResult(
        manifest=Manifest(stops=tuple(new_stops)),
        stops=tuple(alignments),
        failures=failures)
