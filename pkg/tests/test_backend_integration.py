"""Python core driving the TypeScript backend over the wire protocol.

Skipped when node or the built backend is unavailable; `npm run build`
inside backend/ produces dist/server.js.
"""

import shutil
from pathlib import Path

import numpy as np
import pytest

from nearfield.audio import write_wav
from nearfield.corpus import Segment, SpeakerRole
from nearfield.detect import frame_mel
from nearfield.engines.mocks import EnergyVad, SignatureTranscriber
from nearfield.engines.subproc import (
    SubprocessAligner,
    SubprocessFrameScorer,
    SubprocessHandle,
    SubprocessTranscriber,
)
from nearfield.synthgen import SceneSpec, SpeakerSpec, generate_stop

BACKEND = Path(__file__).resolve().parent.parent / "backend" / "dist" / "server.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not BACKEND.exists(),
    reason="node or built backend unavailable")


def handle(role, model):
    return SubprocessHandle(["node", str(BACKEND), "serve", "--role", role,
                             "--model", model], name=f"ts-{role}", timeout_s=30)


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("backend-audio")
    spec = SceneSpec(
        duration_s=25.0,
        speakers=(SpeakerSpec(SpeakerRole.PRIMARY_OFFICER, 1.0, 4),),
        noise_floor=0.01, seed=21)
    generated = generate_stop(spec, "s0", audio_path="s0.wav")
    wav = tmp / "s0.wav"
    write_wav(wav, generated.samples)
    return generated, wav


class TestTypescriptBackend:
    def test_transcriber_matches_in_process_mock(self, scene):
        generated, wav = scene
        mock = SignatureTranscriber()
        with handle("transcriber", "signature") as h:
            remote = SubprocessTranscriber(h)
            for utt in generated.stop.utterances:
                assert remote.transcribe(wav, utt.segment) == \
                    mock.transcribe(wav, utt.segment) == utt.raw_text

    def test_aligner_uniform_split(self, scene):
        _, wav = scene
        with handle("forced_aligner", "uniform") as h:
            remote = SubprocessAligner(h)
            words = remote.force_align(wav, Segment(1.0, 3.0), "hold on please now")
            assert [w.word for w in words] == ["hold", "on", "please", "now"]
            assert words[0].start == pytest.approx(1.0)
            assert words[-1].end == pytest.approx(3.0)

    def test_frame_scorer_matches_energy_vad(self, scene):
        generated, wav = scene
        segment = generated.stop.utterances[0].segment
        features = frame_mel(generated.samples, Segment(segment.start, segment.start + 0.25))
        local = EnergyVad().score_frames(features)
        with handle("frame_scorer", "energy") as h:
            remote = SubprocessFrameScorer(h).score_frames(features)
        assert remote == pytest.approx(local, abs=1e-6)
