"""Subprocess engine transport.

Each handle owns one worker process and serializes its requests (one in
flight at a time); concurrency comes from pooling handles. A timed-out or
failed request raises; callers decide whether to fall back. The worker is
anything speaking the wire protocol on stdin/stdout.
"""

from __future__ import annotations

import queue
import subprocess
import threading
from pathlib import Path

from ..corpus import Segment
from ..detect import MelFeatures
from ..errors import (
    AlignmentFailureError,
    EngineError,
    EngineUnavailableError,
)
from . import ForcedAligner, FrameScorer, Transcriber, WordTiming
from .wire import Request, Response, WireProtocolError, decode_response, encode_request

DEFAULT_TIMEOUT_S = 120.0


class SubprocessHandle:
    """One worker process plus a reader thread and request lock."""

    def __init__(self, command: list[str], name: str = "subprocess",
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        self.command = list(command)
        self.name = name
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._lock = threading.Lock()
        self._next_id = 0

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL, text=True, bufsize=1)
            except OSError as exc:
                raise EngineUnavailableError(str(exc), engine=self.name) from exc
            self._lines = queue.Queue()
            reader = threading.Thread(
                target=self._read_loop, args=(self._proc,), daemon=True)
            reader.start()
        return self._proc

    def _read_loop(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, op: str, *, audio_path: str = "", start_s: float = 0.0,
                end_s: float = 0.0, transcript: str | None = None,
                features: list[list[float]] | None = None) -> Response:
        with self._lock:
            proc = self._ensure_started()
            self._next_id += 1
            req = Request(id=self._next_id, op=op, audio_path=audio_path,
                          start_s=start_s, end_s=end_s, transcript=transcript,
                          features=features)
            try:
                assert proc.stdin is not None
                proc.stdin.write(encode_request(req) + "\n")
                proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise EngineUnavailableError(f"write failed: {exc}", engine=self.name) from exc
            try:
                line = self._lines.get(timeout=self.timeout_s)
            except queue.Empty:
                # Request marked failed, never retried; the worker is torn
                # down so a late response cannot satisfy a future request.
                self.close()
                raise EngineUnavailableError(
                    f"timeout after {self.timeout_s}s", engine=self.name) from None
            if line is None:
                raise EngineUnavailableError("worker exited", engine=self.name)
            try:
                resp = decode_response(line)
            except WireProtocolError as exc:
                raise EngineError(f"bad response: {exc}", engine=self.name) from exc
            if resp.id != req.id:
                raise EngineError(
                    f"response id {resp.id} does not match request {req.id}",
                    engine=self.name)
            return resp

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def __enter__(self) -> "SubprocessHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _raise_engine_failure(resp: Response, name: str) -> None:
    message = resp.error or "engine reported failure"
    if "align" in message.lower():
        raise AlignmentFailureError(message, engine=name)
    raise EngineError(message, engine=name)


class SubprocessTranscriber(Transcriber):
    def __init__(self, handle: SubprocessHandle):
        self.handle = handle

    def transcribe(self, audio_path: str | Path, segment: Segment) -> str:
        resp = self.handle.request(
            "transcribe", audio_path=str(audio_path),
            start_s=segment.start, end_s=segment.end)
        if not resp.ok:
            _raise_engine_failure(resp, self.handle.name)
        return resp.text or ""


class SubprocessAligner(ForcedAligner):
    def __init__(self, handle: SubprocessHandle):
        self.handle = handle

    def force_align(self, audio_path: str | Path, segment: Segment,
                    transcript: str) -> list[WordTiming]:
        if not transcript.strip():
            raise ValueError("transcript must be non-empty")
        resp = self.handle.request(
            "force_align", audio_path=str(audio_path),
            start_s=segment.start, end_s=segment.end, transcript=transcript)
        if not resp.ok:
            raise AlignmentFailureError(resp.error or "alignment failed",
                                        engine=self.handle.name)
        return [WordTiming(word=w["w"], start=float(w["s"]), end=float(w["e"]))
                for w in (resp.words or [])]


class SubprocessFrameScorer(FrameScorer):
    def __init__(self, handle: SubprocessHandle):
        self.handle = handle

    def score_frames(self, features: MelFeatures) -> float:
        payload = [[float(v) for v in row] for row in features.matrix]
        resp = self.handle.request("score_frames", features=payload)
        if not resp.ok:
            _raise_engine_failure(resp, self.handle.name)
        if resp.score is None:
            raise EngineError("response missing score", engine=self.handle.name)
        return float(resp.score)
