"""Training-set filtering criteria over aligned, scored utterances.

Four composable criteria, each implying the previous duration gate:

  c1  keep 0.5s <= duration <= 10s
  c2  c1 and min-WER <= 0.50
  c3  c1 and (min no-subs WER < 0.10 and min-WER < 0.50)
  c4  c1 and min-WER <= 0.10

c3 keeps rows whose residual error is substitution-driven: likely model
misreads rather than alignment mistakes. Boundary semantics are frozen
(c2/c4 non-strict, c3 strict) for determinism. The default criterion for
training is c3.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping

from .corpus import Manifest, StopRecord
from .errors import ScoringError


class CriterionId(str, Enum):
    C1 = "c1"
    C2 = "c2"
    C3 = "c3"
    C4 = "c4"


DEFAULT_CRITERION = CriterionId.C3


@dataclass(frozen=True)
class FilterCriterion:
    id: CriterionId
    min_duration_s: float = 0.5
    max_duration_s: float = 10.0
    wer_cap: float = 0.50
    no_subs_cap: float = 0.10

    def __post_init__(self) -> None:
        if min(self.min_duration_s, self.max_duration_s, self.wer_cap, self.no_subs_cap) <= 0:
            raise ValueError("criterion parameters must be positive")
        if self.no_subs_cap > self.wer_cap:
            raise ValueError("no_subs_cap must not exceed wer_cap")


@dataclass(frozen=True)
class UtteranceScores:
    """Duration plus the alignment-selection scores filtering needs."""

    duration_s: float
    min_wer: float
    min_wer_no_subs: float


def passes(criterion: FilterCriterion, scores: UtteranceScores) -> bool:
    duration_ok = (criterion.min_duration_s <= scores.duration_s
                   <= criterion.max_duration_s)
    if criterion.id is CriterionId.C1:
        return duration_ok
    if criterion.id is CriterionId.C2:
        return duration_ok and scores.min_wer <= criterion.wer_cap
    if criterion.id is CriterionId.C3:
        return (duration_ok
                and scores.min_wer_no_subs < criterion.no_subs_cap
                and scores.min_wer < criterion.wer_cap)
    if criterion.id is CriterionId.C4:
        return duration_ok and scores.min_wer <= criterion.no_subs_cap
    raise ValueError(f"unknown criterion {criterion.id}")


ScoreMap = Mapping[tuple[str, str], tuple[float, float]]


def _scores_for(stop: StopRecord, utt_id: str, score_map: ScoreMap,
                duration: float) -> UtteranceScores:
    key = (stop.stop_id, utt_id)
    if key not in score_map:
        raise ScoringError(f"no alignment scores for utterance {utt_id!r} "
                           f"in stop {stop.stop_id!r}")
    min_wer, min_ns = score_map[key]
    return UtteranceScores(duration_s=duration, min_wer=min_wer,
                           min_wer_no_subs=min_ns)


@dataclass(frozen=True)
class FilterStats:
    """Kept counts and hours per criterion, for side-by-side comparison."""

    applied: CriterionId
    input_utterances: int
    kept_utterances: int
    kept_hours: float
    per_criterion_kept: dict[str, int]
    per_criterion_hours: dict[str, float]

    def to_json(self) -> dict:
        return {
            "applied_criterion": self.applied.value,
            "input_utterances": self.input_utterances,
            "kept_utterances": self.kept_utterances,
            "kept_hours": round(self.kept_hours, 4),
            "per_criterion_kept": self.per_criterion_kept,
            "per_criterion_hours": {k: round(v, 4)
                                    for k, v in self.per_criterion_hours.items()},
        }


def filter_manifest(manifest: Manifest, score_map: ScoreMap,
                    criterion: FilterCriterion,
                    ) -> tuple[Manifest, Manifest, FilterStats]:
    """Partition utterances by the criterion; stats cover all four.

    Only utterances with a chosen segment participate; unaligned ones are
    dropped. Stops left without kept utterances are omitted from the kept
    manifest (and symmetrically for dropped).
    """
    all_criteria = {cid: replace(criterion, id=cid) for cid in CriterionId}
    kept_stops: list[StopRecord] = []
    dropped_stops: list[StopRecord] = []
    tally = {cid.value: 0 for cid in CriterionId}
    hours = {cid.value: 0.0 for cid in CriterionId}
    total = 0
    kept_count = 0
    kept_seconds = 0.0

    for stop in manifest.stops:
        kept_utts, dropped_utts = [], []
        for utt in stop.utterances:
            if utt.segment is None:
                dropped_utts.append(utt)
                continue
            total += 1
            scores = _scores_for(stop, utt.id, score_map, utt.segment.duration)
            for cid, crit in all_criteria.items():
                if passes(crit, scores):
                    tally[cid.value] += 1
                    hours[cid.value] += scores.duration_s / 3600.0
            if passes(criterion, scores):
                kept_utts.append(utt)
                kept_count += 1
                kept_seconds += scores.duration_s
            else:
                dropped_utts.append(utt)
        if kept_utts:
            kept_stops.append(replace(stop, utterances=tuple(kept_utts)))
        if dropped_utts:
            dropped_stops.append(replace(stop, utterances=tuple(dropped_utts)))

    stats = FilterStats(
        applied=criterion.id,
        input_utterances=total,
        kept_utterances=kept_count,
        kept_hours=kept_seconds / 3600.0,
        per_criterion_kept=tally,
        per_criterion_hours=hours,
    )
    return Manifest(stops=tuple(kept_stops)), Manifest(stops=tuple(dropped_stops)), stats
