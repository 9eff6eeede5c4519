import numpy as np
import pytest

from nearfield.align import (
    AlignmentCandidate,
    AlignmentMethod,
    align_manifest,
    chunk_utterances,
    heuristic_timestamps,
    propose_candidates,
    select_best,
    split_chunk_by_words,
)
from nearfield.audio import read_wav, write_wav
from nearfield.corpus import Manifest, Segment, SpeakerRole, Utterance
from nearfield.engines import WordTiming
from nearfield.engines.mocks import (
    FailingAligner,
    SignatureTranscriber,
    TableTranscriber,
    TruthJitterAligner,
    UniformAligner,
)
from nearfield.errors import NearfieldError, UnalignableUtteranceError
from nearfield.synthgen import CorpusSpec, SpeakerSpec, generate_corpus, generate_stop, SceneSpec


def utt(uid, start, end, text="some words here", role=SpeakerRole.PRIMARY_OFFICER):
    return Utterance(id=uid, speaker_role=role, raw_text=text,
                     raw_start_s=start, raw_end_s=end)


class TestHeuristicTimestamps:
    def test_padding(self):
        segs = heuristic_timestamps([utt("u1", 12, 13)])
        assert segs["u1"] == Segment(11.75, 13.25)

    def test_end_before_start_repaired(self):
        segs = heuristic_timestamps([utt("u1", 5, 3)])
        assert segs["u1"] == Segment(4.75, 6.25)

    def test_clamp_at_zero(self):
        segs = heuristic_timestamps([utt("u1", 0, 2)])
        assert segs["u1"].start == 0.0

    def test_missing_end_borrows_next_start(self):
        segs = heuristic_timestamps([utt("u1", 3, None), utt("u2", 7, 9)])
        assert segs["u1"] == Segment(2.75, 7.25)

    def test_missing_end_last_utterance(self):
        segs = heuristic_timestamps([utt("u1", 3, None)])
        assert segs["u1"] == Segment(2.75, 4.25)

    def test_non_monotonic_start_pulled_up(self):
        segs = heuristic_timestamps([utt("u1", 10, 12), utt("u2", 8, 13)])
        assert segs["u2"].start == pytest.approx(9.75)

    def test_clamp_to_duration(self):
        segs = heuristic_timestamps([utt("u1", 5, 9)], audio_duration_s=8.0)
        assert segs["u1"] == Segment(4.75, 8.0)

    def test_marks_beyond_audio_fall_back(self):
        segs = heuristic_timestamps([utt("u1", 50, 55)], audio_duration_s=10.0)
        assert segs["u1"] == Segment(9.0, 10.0)

    def test_unmarked_skipped(self):
        u = Utterance(id="x", speaker_role=SpeakerRole.UNKNOWN, raw_text="t")
        assert heuristic_timestamps([u]) == {}


class TestChunkUtterances:
    def _items(self, durations):
        items = []
        t = 0.0
        for i, d in enumerate(durations):
            items.append((utt(f"u{i}", int(t), int(t + d)), Segment(t, t + d)))
            t += d + 1.0
        return items

    def test_example_8_7_6(self):
        chunks = chunk_utterances(self._items([8, 7, 6]), max_total_s=20)
        sizes = [len(c.members) for c in chunks]
        assert sizes == [2, 1]

    def test_single_oversize(self):
        chunks = chunk_utterances(self._items([25]), max_total_s=20)
        assert len(chunks) == 1
        assert chunks[0].total_s == 25

    def test_boundary_inclusive(self):
        chunks = chunk_utterances(self._items([5, 5, 5, 5]), max_total_s=20)
        assert len(chunks) == 1

    def test_concatenation_preserved(self):
        items = self._items([3, 9, 12, 2, 8])
        chunks = chunk_utterances(items, max_total_s=20)
        flattened = [m[0].id for c in chunks for m in c.members]
        assert flattened == [u.id for u, _ in items]
        for chunk in chunks:
            if len(chunk.members) > 1:
                assert chunk.total_s <= 20

    def test_span_covers_members(self):
        items = self._items([4, 4])
        chunk = chunk_utterances(items, max_total_s=20)[0]
        assert chunk.span.start == items[0][1].start
        assert chunk.span.end == items[-1][1].end


class TestSplitChunkByWords:
    def _chunk(self, texts, start=0.0, end=5.0):
        items = []
        for i, text in enumerate(texts):
            items.append((utt(f"u{i}", 0, 1, text=text), Segment(start, end)))
        return chunk_utterances(items, max_total_s=100)[0]

    def test_two_utterances_uniform(self):
        chunk = self._chunk(["a b", "c d e"], 0.0, 5.0)
        timings = [WordTiming(w, i * 1.0, (i + 1) * 1.0) for i, w in
                   enumerate(["a", "b", "c", "d", "e"])]
        segs = split_chunk_by_words(chunk, timings)
        assert segs["u0"] == Segment(0.0, 2.0)
        assert segs["u1"] == Segment(2.0, 5.0)

    def test_single_member(self):
        chunk = self._chunk(["x y z"])
        timings = [WordTiming(w, i * 0.5, i * 0.5 + 0.4) for i, w in enumerate("xyz")]
        segs = split_chunk_by_words(chunk, timings)
        assert segs["u0"] == Segment(0.0, 1.4)

    def test_count_mismatch_fails(self):
        chunk = self._chunk(["a b c d e"])
        timings = [WordTiming(w, i * 1.0, i + 0.5) for i, w in enumerate("abcd")]
        with pytest.raises(NearfieldError, match="mismatch"):
            split_chunk_by_words(chunk, timings)


@pytest.fixture
def synthetic_stop(tmp_path):
    spec = SceneSpec(
        duration_s=30.0,
        speakers=(SpeakerSpec(SpeakerRole.PRIMARY_OFFICER, 1.0, 4),
                  SpeakerSpec(SpeakerRole.COMMUNITY_MEMBER, 0.8, 3)),
        seed=77)
    generated = generate_stop(spec, "s0", audio_path="s0.wav")
    wav = tmp_path / "s0.wav"
    write_wav(wav, generated.samples)
    return generated.stop, wav


class TestProposeCandidates:
    def test_both_aligners_give_five_methods(self, synthetic_stop):
        stop, wav = synthetic_stop
        truth = TruthJitterAligner.from_manifest(Manifest(stops=(stop,)))
        cands = propose_candidates(stop, UniformAligner(), truth, wav,
                                   audio_duration_s=30.0)
        for utt_id, clist in cands.items():
            methods = {c.method for c in clist}
            assert AlignmentMethod.UNALIGNED in methods
            assert len(clist) == 5, (utt_id, methods)

    def test_failing_aligner_degrades(self, synthetic_stop):
        stop, wav = synthetic_stop
        cands = propose_candidates(stop, FailingAligner(), UniformAligner(), wav,
                                   audio_duration_s=30.0)
        for clist in cands.values():
            methods = {c.method for c in clist}
            assert methods == {AlignmentMethod.UNALIGNED,
                               AlignmentMethod.W2V2, AlignmentMethod.W2V2_CHUNKED}

    def test_unmarked_utterances_skipped(self, synthetic_stop, tmp_path):
        stop, wav = synthetic_stop
        from dataclasses import replace
        unmarked = replace(stop.utterances[0], raw_start_s=None, raw_end_s=None,
                           segment=None)
        stop2 = replace(stop, utterances=(unmarked,) + stop.utterances[1:])
        cands = propose_candidates(stop2, UniformAligner(), UniformAligner(), wav)
        assert unmarked.id not in cands


class TestSelectBest:
    def test_table_hit_wins(self, tmp_path):
        wav = tmp_path / "t.wav"
        write_wav(wav, np.zeros(16000 * 10))
        reference = utt("u0", 2, 4, text="alpha bravo charlie")
        good = AlignmentCandidate(AlignmentMethod.W2V2, Segment(2.0, 4.0))
        bad = AlignmentCandidate(AlignmentMethod.MFA, Segment(5.0, 7.0))
        engine = TableTranscriber({("t.wav", 2.0, 4.0): "alpha bravo charlie"})
        aligned = select_best(reference, [bad, good], {"table": engine}, wav)
        assert aligned.chosen.method is AlignmentMethod.W2V2
        assert aligned.min_wer == 0.0
        assert aligned.chosen.min_wer == min(c.min_wer for c in aligned.candidates)

    def test_tie_prefers_canonical_order(self, tmp_path):
        wav = tmp_path / "t.wav"
        write_wav(wav, np.zeros(16000 * 10))
        reference = utt("u0", 2, 4, text="same words")
        c1 = AlignmentCandidate(AlignmentMethod.W2V2_CHUNKED, Segment(2.0, 4.0))
        c2 = AlignmentCandidate(AlignmentMethod.UNALIGNED, Segment(1.75, 4.25))
        engine = TableTranscriber({}, default="same words")
        aligned = select_best(reference, [c1, c2], {"table": engine}, wav)
        assert aligned.chosen.method is AlignmentMethod.UNALIGNED

    def test_all_failures_unalignable(self, tmp_path):
        wav = tmp_path / "t.wav"
        write_wav(wav, np.zeros(1600))

        reference = utt("u0", 2, 4)
        cand = AlignmentCandidate(AlignmentMethod.UNALIGNED, Segment(50.0, 52.0))
        engine = SignatureTranscriber()  # out of bounds for every call
        with pytest.raises(UnalignableUtteranceError):
            select_best(reference, [cand], {"echo": engine}, wav)

    def test_no_subs_score_attached(self, tmp_path):
        wav = tmp_path / "t.wav"
        write_wav(wav, np.zeros(16000 * 10))
        reference = utt("u0", 2, 4, text="alpha bravo charlie")
        cand = AlignmentCandidate(AlignmentMethod.UNALIGNED, Segment(2.0, 4.0))
        engine = TableTranscriber({}, default="alpha bravo delta")
        aligned = select_best(reference, [cand], {"table": engine}, wav)
        assert aligned.min_wer == pytest.approx(1 / 3)
        assert aligned.min_wer_no_subs == 0.0


class TestAlignManifest:
    def test_recovers_midpoints_on_synthetic_corpus(self, tmp_path):
        spec = CorpusSpec(
            n_stops=6, duration_s=40.0, noise_floor=0.0,
            speakers=(SpeakerSpec(SpeakerRole.PRIMARY_OFFICER, 1.0, 5),
                      SpeakerSpec(SpeakerRole.COMMUNITY_MEMBER, 0.8, 4)),
            seed=303)
        truth = generate_corpus(spec, tmp_path)
        truth_aligner = TruthJitterAligner.from_manifest(truth, jitter_s=0.02, seed=1)

        def resolve(stop):
            path = tmp_path / stop.audio_path
            return path, len(read_wav(path)) / 16000.0

        result = align_manifest(truth, UniformAligner(), truth_aligner,
                                {"echo": SignatureTranscriber()}, resolve)
        truth_map = {(s.stop_id, u.id): u.segment for s in truth for u in s.utterances}
        total = hits = 0
        for sa in result.stops:
            for uid, aligned in sa.aligned.items():
                t = truth_map[(sa.stop_id, uid)]
                mid_err = abs((aligned.chosen.segment.start + aligned.chosen.segment.end) / 2
                              - (t.start + t.end) / 2)
                total += 1
                hits += mid_err <= 0.25
        assert total == truth.utterance_count()
        assert hits / total >= 0.9

    def test_aligned_manifest_has_segments(self, tmp_path):
        spec = CorpusSpec(n_stops=2, duration_s=35.0, noise_floor=0.0, seed=9)
        truth = generate_corpus(spec, tmp_path)

        def resolve(stop):
            path = tmp_path / stop.audio_path
            return path, len(read_wav(path)) / 16000.0

        result = align_manifest(truth, UniformAligner(),
                                TruthJitterAligner.from_manifest(truth),
                                {"echo": SignatureTranscriber()}, resolve)
        for stop in result.manifest:
            for u in stop.utterances:
                assert u.segment is not None

    def test_method_frequencies_shape(self, tmp_path):
        spec = CorpusSpec(n_stops=2, duration_s=35.0, noise_floor=0.0, seed=10)
        truth = generate_corpus(spec, tmp_path)

        def resolve(stop):
            path = tmp_path / stop.audio_path
            return path, len(read_wav(path)) / 16000.0

        result = align_manifest(truth, UniformAligner(),
                                TruthJitterAligner.from_manifest(truth),
                                {"echo": SignatureTranscriber()}, resolve)
        freqs = result.method_frequencies()
        assert set(freqs) == {m.value for m in AlignmentMethod}
        assert sum(freqs.values()) == pytest.approx(1.0)

    def test_parallel_matches_serial(self, tmp_path):
        spec = CorpusSpec(n_stops=3, duration_s=35.0, noise_floor=0.0, seed=12)
        truth = generate_corpus(spec, tmp_path)

        def resolve(stop):
            path = tmp_path / stop.audio_path
            return path, len(read_wav(path)) / 16000.0

        kwargs = dict(
            aligner_a=UniformAligner(),
            aligner_b=TruthJitterAligner.from_manifest(truth),
            transcribers={"echo": SignatureTranscriber()},
            resolve_audio=resolve)
        serial = align_manifest(truth, **kwargs, jobs=1)
        parallel = align_manifest(truth, **kwargs, jobs=3)
        assert serial.manifest == parallel.manifest
