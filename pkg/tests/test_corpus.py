import json
import random

import pytest

from nearfield.corpus import (
    Gender,
    Manifest,
    Race,
    Segment,
    SpeakerRole,
    SplitConfig,
    StopRecord,
    Utterance,
    load_manifest,
    partition_splits,
    save_manifest,
)
from nearfield.errors import InfeasibleSplitError, ManifestError


def make_stop(stop_id, officers, primary=None, race=Race.WHITE, n_utts=3,
              gender=Gender.MALE):
    primary = primary if primary is not None else officers[:1]
    utts = tuple(
        Utterance(
            id=f"{stop_id}-u{i}",
            speaker_role=SpeakerRole.PRIMARY_OFFICER if i % 2 == 0 else SpeakerRole.COMMUNITY_MEMBER,
            raw_text=f"utterance {i} text",
            raw_start_s=i * 5,
            raw_end_s=i * 5 + 3,
            segment=Segment(i * 5.0, i * 5 + 3.0),
        )
        for i in range(n_utts))
    return StopRecord(
        stop_id=stop_id,
        audio_path=f"audio/{stop_id}.wav",
        primary_officer_ids=frozenset(primary),
        all_officer_ids=frozenset(officers),
        driver_race=race,
        driver_gender=gender,
        utterances=utts,
    )


class TestSegment:
    def test_duration_millisecond_exact(self):
        assert Segment(10.1, 10.35).duration == 0.25

    def test_rounding(self):
        seg = Segment(1.00049, 2.0)
        assert seg.start == 1.0

    def test_end_must_exceed_start(self):
        with pytest.raises(ValueError):
            Segment(2.0, 2.0)

    def test_negative_start_rejected(self):
        with pytest.raises(ValueError):
            Segment(-0.5, 1.0)

    def test_overlap_and_intersection(self):
        assert Segment(0, 2).overlaps(Segment(1, 3))
        assert not Segment(0, 1).overlaps(Segment(1, 2))
        assert Segment(0, 2).intersection(Segment(1, 3)) == pytest.approx(1.0)


class TestInvariants:
    def test_empty_raw_text_rejected(self):
        with pytest.raises(ValueError):
            Utterance(id="u", speaker_role=SpeakerRole.UNKNOWN, raw_text="")

    def test_primary_subset_of_all(self):
        with pytest.raises(ValueError):
            StopRecord(stop_id="s", audio_path="a.wav",
                       primary_officer_ids=frozenset({"o1"}),
                       all_officer_ids=frozenset({"o2"}))

    def test_utterances_sorted(self):
        utts = (
            Utterance(id="u1", speaker_role=SpeakerRole.UNKNOWN, raw_text="x", raw_start_s=9),
            Utterance(id="u2", speaker_role=SpeakerRole.UNKNOWN, raw_text="y", raw_start_s=3),
        )
        with pytest.raises(ValueError):
            StopRecord(stop_id="s", audio_path="a.wav",
                       primary_officer_ids=frozenset(),
                       all_officer_ids=frozenset(), utterances=utts)

    def test_duplicate_stop_ids(self):
        s = make_stop("dup", ["o1"])
        with pytest.raises(ValueError):
            Manifest(stops=(s, s))


class TestManifestIO:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert len(load_manifest(path)) == 0

    def test_single_line_fixture(self, tmp_path):
        line = {
            "stop_id": "s1", "audio_path": "audio/s1.wav",
            "primary_officer_ids": ["o1"], "all_officer_ids": ["o1", "o2"],
            "driver_race": "black", "driver_gender": "female",
            "officer_race": "white", "officer_gender": "male",
            "utterances": [
                {"id": "u1", "speaker_role": "primary_officer", "raw_text": "hi",
                 "raw_start_s": 2, "raw_end_s": 4, "start_s": 2.1, "end_s": 3.9},
                {"id": "u2", "speaker_role": "community_member", "raw_text": "yo",
                 "raw_start_s": 5, "raw_end_s": None, "start_s": None, "end_s": None},
            ],
        }
        path = tmp_path / "one.jsonl"
        path.write_text(json.dumps(line) + "\n")
        manifest = load_manifest(path)
        assert len(manifest) == 1
        stop = manifest.stops[0]
        assert stop.driver_race is Race.BLACK
        assert stop.utterances[0].segment == Segment(2.1, 3.9)
        assert stop.utterances[1].segment is None

    def test_invalid_segment_names_utterance(self, tmp_path):
        line = {
            "stop_id": "s1", "audio_path": "a.wav",
            "primary_officer_ids": [], "all_officer_ids": [],
            "driver_race": "white", "driver_gender": "male",
            "officer_race": "white", "officer_gender": "male",
            "utterances": [{"id": "bad-utt", "speaker_role": "unknown", "raw_text": "x",
                            "raw_start_s": 1, "raw_end_s": 2, "start_s": 5.0, "end_s": 4.0}],
        }
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(line) + "\n")
        with pytest.raises(ManifestError, match="bad-utt"):
            load_manifest(path)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text("{}\nnot json\n")
        with pytest.raises(ManifestError, match="line"):
            load_manifest(path)

    def test_round_trip(self, tmp_path):
        manifest = Manifest(stops=tuple(
            make_stop(f"s{i}", [f"o{i}", f"o{i + 10}"]) for i in range(3)))
        path = tmp_path / "m.jsonl"
        save_manifest(manifest, path)
        assert load_manifest(path) == manifest
        assert len(path.read_text().strip().splitlines()) == 3

    def test_zero_stop_round_trip(self, tmp_path):
        path = tmp_path / "zero.jsonl"
        save_manifest(Manifest(), path)
        assert path.read_text() == ""
        assert load_manifest(path) == Manifest()

    def test_unwritable_path(self, tmp_path):
        target = tmp_path / "file.jsonl"
        target.write_text("")
        with pytest.raises(OSError):
            # Using an existing file as a directory component fails.
            save_manifest(Manifest(), target / "x.jsonl")


class TestPartitionSplits:
    def test_distinct_officers_no_withheld(self):
        manifest = Manifest(stops=tuple(
            make_stop(f"s{i}", [f"o{i}"], race=Race.BLACK if i % 2 else Race.WHITE)
            for i in range(8)))
        result = partition_splits(manifest, SplitConfig(test_stops=2, validation_stops=2, seed=1))
        assert len(result.withheld) == 0
        assert len(result.test) == 2

    def test_shared_officer_goes_to_withheld(self):
        # b1 is the only black-driver stop, so it must be selected for test;
        # x1 shares officer oA with it and has to land in withheld.
        stops = (
            make_stop("b1", ["oA"], race=Race.BLACK),
            make_stop("w1", ["oB"], race=Race.WHITE),
            make_stop("w2", ["oC"], race=Race.WHITE),
            make_stop("x1", ["oA", "oZ"], race=Race.WHITE),
            make_stop("x2", ["oD"], race=Race.WHITE),
        )
        manifest = Manifest(stops=stops)
        result = partition_splits(manifest, SplitConfig(test_stops=2, validation_stops=1, seed=3))
        test_ids = {s.stop_id for s in result.test}
        assert "b1" in test_ids
        assert {s.stop_id for s in result.withheld} == {"x1"}

    def test_infeasible_balance(self):
        stops = tuple([make_stop("b1", ["o1"], race=Race.BLACK)] +
                      [make_stop(f"w{i}", [f"ow{i}"], race=Race.WHITE) for i in range(5)])
        with pytest.raises(InfeasibleSplitError) as err:
            partition_splits(Manifest(stops=stops),
                             SplitConfig(test_stops=4, validation_stops=0, seed=0))
        assert err.value.achievable["black"] == 1

    def test_odd_balanced_size_rejected(self):
        manifest = Manifest(stops=(make_stop("s", ["o"]),))
        with pytest.raises(InfeasibleSplitError):
            partition_splits(manifest, SplitConfig(test_stops=3, validation_stops=0))

    def test_partition_is_exact(self):
        rng = random.Random(7)
        stops = []
        for i in range(30):
            officers = [f"o{rng.randint(0, 14)}" for _ in range(rng.randint(1, 3))]
            stops.append(make_stop(f"s{i}", officers,
                                   race=rng.choice([Race.BLACK, Race.WHITE, Race.UNKNOWN])))
        manifest = Manifest(stops=tuple(stops))
        result = partition_splits(manifest, SplitConfig(test_stops=2, validation_stops=3, seed=11))
        ids = []
        for part in result:
            ids.extend(s.stop_id for s in part)
        assert sorted(ids) == sorted(s.stop_id for s in stops)

    def test_officer_disjointness(self):
        rng = random.Random(13)
        stops = []
        for i in range(40):
            officers = [f"o{rng.randint(0, 9)}" for _ in range(rng.randint(1, 3))]
            stops.append(make_stop(f"s{i}", officers,
                                   race=Race.BLACK if i % 2 else Race.WHITE))
        manifest = Manifest(stops=tuple(stops))
        result = partition_splits(manifest, SplitConfig(test_stops=2, validation_stops=4, seed=5))
        test_officers = set()
        for s in result.test:
            test_officers |= s.all_officer_ids
        for s in list(result.train) + list(result.validation):
            assert not (s.all_officer_ids & test_officers)
        val_primary = set()
        for s in result.validation:
            val_primary |= s.primary_officer_ids
        for s in result.train:
            assert not (s.primary_officer_ids & val_primary)

    def test_unknown_race_never_in_test(self):
        stops = tuple([make_stop(f"u{i}", [f"o{i}"], race=Race.UNKNOWN) for i in range(4)] +
                      [make_stop("b", ["ob"], race=Race.BLACK),
                       make_stop("w", ["ow"], race=Race.WHITE)])
        result = partition_splits(Manifest(stops=stops),
                                  SplitConfig(test_stops=2, validation_stops=1, seed=2))
        assert {s.stop_id for s in result.test} == {"b", "w"}

    def test_utterance_cap(self):
        stops = (make_stop("big", ["o1"], race=Race.BLACK, n_utts=6),
                 make_stop("small", ["o2"], race=Race.BLACK, n_utts=2),
                 make_stop("w", ["o3"], race=Race.WHITE, n_utts=2))
        result = partition_splits(
            Manifest(stops=stops),
            SplitConfig(test_stops=2, validation_stops=0, max_test_utterances=5, seed=0))
        assert {s.stop_id for s in result.test} == {"small", "w"}

    def test_deterministic(self):
        rng = random.Random(42)
        stops = tuple(
            make_stop(f"s{i}", [f"o{rng.randint(0, 9)}"],
                      race=Race.BLACK if i % 2 else Race.WHITE)
            for i in range(20))
        manifest = Manifest(stops=stops)
        config = SplitConfig(test_stops=4, validation_stops=2, seed=99)
        a = partition_splits(manifest, config)
        b = partition_splits(manifest, config)
        assert a == b
