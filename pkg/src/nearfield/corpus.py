"""Data model for stops, utterances, and manifests, plus split construction.

A manifest is JSONL, one stop per line. Times are seconds at millisecond
precision; transcriber marks (``raw_start_s``/``raw_end_s``) are integer
seconds, reflecting the 1-second granularity of the source annotations.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator

from .errors import InfeasibleSplitError, ManifestError

SCHEMA_VERSION = 1


class SpeakerRole(str, Enum):
    PRIMARY_OFFICER = "primary_officer"
    SECONDARY_OFFICER = "secondary_officer"
    COMMUNITY_MEMBER = "community_member"
    DISPATCH = "dispatch"
    UNKNOWN = "unknown"


class Race(str, Enum):
    BLACK = "black"
    WHITE = "white"
    HISPANIC = "hispanic"
    OTHER = "other"
    UNKNOWN = "unknown"


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


def _round_ms(value: float) -> float:
    return round(float(value), 3)


@dataclass(frozen=True, order=True)
class Segment:
    """A [start, end) time span in seconds, millisecond precision."""

    start: float
    end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _round_ms(self.start))
        object.__setattr__(self, "end", _round_ms(self.end))
        if self.start < 0:
            raise ValueError(f"segment start must be non-negative, got {self.start}")
        if self.end <= self.start:
            raise ValueError(f"segment end must exceed start, got [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return _round_ms(self.end - self.start)

    def overlaps(self, other: "Segment") -> bool:
        return self.start < other.end and other.start < self.end

    def intersection(self, other: "Segment") -> float:
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))


@dataclass(frozen=True)
class Utterance:
    """One transcribed speaking turn."""

    id: str
    speaker_role: SpeakerRole
    raw_text: str
    raw_start_s: int | None = None
    raw_end_s: int | None = None
    segment: Segment | None = None

    def __post_init__(self) -> None:
        if not self.raw_text:
            raise ValueError(f"utterance {self.id!r}: raw_text must be non-empty")

    @property
    def has_raw_marks(self) -> bool:
        return self.raw_start_s is not None


@dataclass(frozen=True)
class StopRecord:
    """One recorded stop: audio reference, speakers, and utterances."""

    stop_id: str
    audio_path: str
    primary_officer_ids: frozenset[str]
    all_officer_ids: frozenset[str]
    driver_race: Race = Race.UNKNOWN
    driver_gender: Gender = Gender.UNKNOWN
    officer_race: Race = Race.UNKNOWN
    officer_gender: Gender = Gender.UNKNOWN
    utterances: tuple[Utterance, ...] = ()

    def __post_init__(self) -> None:
        if not self.primary_officer_ids <= self.all_officer_ids:
            raise ValueError(
                f"stop {self.stop_id!r}: primary officers must be a subset of all officers")
        marks = [u.raw_start_s for u in self.utterances if u.raw_start_s is not None]
        if marks != sorted(marks):
            raise ValueError(
                f"stop {self.stop_id!r}: utterances must be sorted by raw_start_s")


@dataclass(frozen=True)
class Manifest:
    """An ordered collection of stops with unique ids."""

    stops: tuple[StopRecord, ...] = ()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for stop in self.stops:
            if stop.stop_id in seen:
                raise ValueError(f"duplicate stop_id {stop.stop_id!r}")
            seen.add(stop.stop_id)

    def __len__(self) -> int:
        return len(self.stops)

    def __iter__(self) -> Iterator[StopRecord]:
        return iter(self.stops)

    def utterance_count(self) -> int:
        return sum(len(s.utterances) for s in self.stops)


# ---------------------------------------------------------------------------
# JSONL serialization


def _utterance_to_json(utt: Utterance) -> dict:
    return {
        "id": utt.id,
        "speaker_role": utt.speaker_role.value,
        "raw_text": utt.raw_text,
        "raw_start_s": utt.raw_start_s,
        "raw_end_s": utt.raw_end_s,
        "start_s": utt.segment.start if utt.segment else None,
        "end_s": utt.segment.end if utt.segment else None,
    }


def _stop_to_json(stop: StopRecord) -> dict:
    return {
        "stop_id": stop.stop_id,
        "audio_path": stop.audio_path,
        "primary_officer_ids": sorted(stop.primary_officer_ids),
        "all_officer_ids": sorted(stop.all_officer_ids),
        "driver_race": stop.driver_race.value,
        "driver_gender": stop.driver_gender.value,
        "officer_race": stop.officer_race.value,
        "officer_gender": stop.officer_gender.value,
        "utterances": [_utterance_to_json(u) for u in stop.utterances],
    }


def _utterance_from_json(obj: dict, *, stop_id: str, line: int) -> Utterance:
    try:
        segment = None
        if obj.get("start_s") is not None and obj.get("end_s") is not None:
            segment = Segment(obj["start_s"], obj["end_s"])
        return Utterance(
            id=obj["id"],
            speaker_role=SpeakerRole(obj["speaker_role"]),
            raw_text=obj["raw_text"],
            raw_start_s=obj.get("raw_start_s"),
            raw_end_s=obj.get("raw_end_s"),
            segment=segment,
        )
    except (KeyError, ValueError) as exc:
        utt_id = obj.get("id", "<missing id>")
        raise ManifestError(f"utterance {utt_id!r}: {exc}", line=line, stop_id=stop_id) from exc


def _stop_from_json(obj: dict, *, line: int) -> StopRecord:
    stop_id = obj.get("stop_id")
    if not isinstance(stop_id, str) or not stop_id:
        raise ManifestError("missing or empty stop_id", line=line, field="stop_id")
    try:
        utterances = tuple(
            _utterance_from_json(u, stop_id=stop_id, line=line)
            for u in obj.get("utterances", []))
        return StopRecord(
            stop_id=stop_id,
            audio_path=obj["audio_path"],
            primary_officer_ids=frozenset(obj["primary_officer_ids"]),
            all_officer_ids=frozenset(obj["all_officer_ids"]),
            driver_race=Race(obj["driver_race"]),
            driver_gender=Gender(obj["driver_gender"]),
            officer_race=Race(obj["officer_race"]),
            officer_gender=Gender(obj["officer_gender"]),
            utterances=utterances,
        )
    except ManifestError:
        raise
    except KeyError as exc:
        raise ManifestError(f"missing key {exc}", line=line, stop_id=stop_id,
                            field=str(exc).strip("'")) from exc
    except ValueError as exc:
        raise ManifestError(str(exc), line=line, stop_id=stop_id) from exc


def load_manifest(path: str | Path) -> Manifest:
    """Load a JSONL manifest, validating every invariant."""
    stops: list[StopRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=line_no) from exc
            stops.append(_stop_from_json(obj, line=line_no))
    try:
        return Manifest(stops=tuple(stops))
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write a manifest as JSONL, one stop per line. Round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for stop in manifest.stops:
            fh.write(json.dumps(_stop_to_json(stop), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Split construction


@dataclass(frozen=True)
class SplitConfig:
    """Constraints for test/validation/train partitioning.

    Test stops must be pairwise officer-disjoint, each with fewer than
    ``max_test_utterances`` utterances, and race-balanced (50/50 black and
    white drivers) when ``race_balance`` is set. Stops with unknown driver
    race are never eligible for the test split.
    """

    test_stops: int
    validation_stops: int
    max_test_utterances: int = 60
    race_balance: bool = True
    seed: int = 0


@dataclass(frozen=True)
class SplitResult:
    train: Manifest
    validation: Manifest
    test: Manifest
    withheld: Manifest

    def __iter__(self) -> Iterator[Manifest]:
        return iter((self.train, self.validation, self.test, self.withheld))


def _shares_officer(a: StopRecord, b: StopRecord) -> bool:
    return bool(a.all_officer_ids & b.all_officer_ids)


def partition_splits(manifest: Manifest, config: SplitConfig) -> SplitResult:
    """Partition stops into train/validation/test/withheld.

    Officer disjointness is absolute between test and train+validation
    (conflicting stops move to withheld). Primary officers are also kept
    disjoint between validation and train; secondary overlap there is
    permitted. Deterministic given (manifest, config, seed).
    """
    rng = random.Random(config.seed)
    stops = list(manifest.stops)

    eligible = [
        s for s in stops
        if len(s.utterances) < config.max_test_utterances
        and s.driver_race in (Race.BLACK, Race.WHITE)
    ]
    # Fewer stops sharing this stop's officers means less withheld data.
    conflict_count = {
        s.stop_id: sum(1 for o in stops if o.stop_id != s.stop_id and _shares_officer(s, o))
        for s in eligible
    }
    rng.shuffle(eligible)
    eligible.sort(key=lambda s: conflict_count[s.stop_id])

    if config.race_balance:
        if config.test_stops % 2 != 0:
            raise InfeasibleSplitError(
                f"race-balanced test split requires an even size, got {config.test_stops}")
        quotas = {Race.BLACK: config.test_stops // 2, Race.WHITE: config.test_stops // 2}
    else:
        quotas = {Race.BLACK: config.test_stops, Race.WHITE: config.test_stops}

    test: list[StopRecord] = []
    taken = {race: 0 for race in quotas}
    for cand in eligible:
        if len(test) == config.test_stops:
            break
        if taken[cand.driver_race] >= quotas[cand.driver_race]:
            continue
        if any(_shares_officer(cand, t) for t in test):
            continue
        test.append(cand)
        taken[cand.driver_race] += 1
    if len(test) < config.test_stops:
        raise InfeasibleSplitError(
            f"cannot select {config.test_stops} test stops "
            f"(achievable: {len(test)}; black={taken[Race.BLACK]}, white={taken[Race.WHITE]})",
            achievable={"total": len(test),
                        "black": taken[Race.BLACK], "white": taken[Race.WHITE]})

    test_ids = {s.stop_id for s in test}
    test_officers = frozenset().union(*(s.all_officer_ids for s in test)) if test else frozenset()

    withheld: list[StopRecord] = []
    pool: list[StopRecord] = []
    for stop in stops:
        if stop.stop_id in test_ids:
            continue
        if stop.all_officer_ids & test_officers:
            withheld.append(stop)
        else:
            pool.append(stop)

    shuffled_pool = list(pool)
    rng.shuffle(shuffled_pool)
    if len(shuffled_pool) < config.validation_stops:
        raise InfeasibleSplitError(
            f"cannot select {config.validation_stops} validation stops "
            f"(achievable: {len(shuffled_pool)})",
            achievable={"total": len(shuffled_pool)})
    validation_ids = {s.stop_id for s in shuffled_pool[:config.validation_stops]}
    validation = [s for s in pool if s.stop_id in validation_ids]
    val_primary = frozenset().union(
        *(s.primary_officer_ids for s in validation)) if validation else frozenset()

    train: list[StopRecord] = []
    for stop in pool:
        if stop.stop_id in validation_ids:
            continue
        if stop.primary_officer_ids & val_primary:
            withheld.append(stop)
        else:
            train.append(stop)

    order = {s.stop_id: i for i, s in enumerate(stops)}
    withheld.sort(key=lambda s: order[s.stop_id])
    test.sort(key=lambda s: order[s.stop_id])
    return SplitResult(
        train=Manifest(stops=tuple(train)),
        validation=Manifest(stops=tuple(validation)),
        test=Manifest(stops=tuple(test)),
        withheld=Manifest(stops=tuple(withheld)),
    )


def with_segments(stop: StopRecord,
                  segments: dict[str, Segment | None]) -> StopRecord:
    """Return a copy of the stop with utterance segments replaced by id."""
    new_utts = tuple(
        replace(u, segment=segments.get(u.id, u.segment)) for u in stop.utterances)
    return replace(stop, utterances=new_utts)
