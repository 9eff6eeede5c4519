"""Line-delimited JSON wire protocol for subprocess engines.

One request object per line on the worker's stdin, one response per line
on its stdout, matched by ``id``. Audio travels by path + segment, never
by inline samples; frame-scorer features are the one inline payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

VALID_OPS = ("transcribe", "force_align", "score_frames")


class WireProtocolError(ValueError):
    """Message violates the protocol schema."""


@dataclass(frozen=True)
class Request:
    id: int
    op: str
    audio_path: str = ""
    start_s: float = 0.0
    end_s: float = 0.0
    transcript: str | None = None
    features: list[list[float]] | None = None


@dataclass(frozen=True)
class Response:
    id: int
    ok: bool
    text: str | None = None
    words: list[dict] | None = None
    score: float | None = None
    error: str | None = None


def encode_request(req: Request) -> str:
    obj: dict = {"id": req.id, "op": req.op, "audio_path": req.audio_path,
                 "start_s": req.start_s, "end_s": req.end_s}
    if req.transcript is not None:
        obj["transcript"] = req.transcript
    if req.features is not None:
        obj["features"] = req.features
    # Non-finite floats are not valid interchange JSON; refuse to emit them.
    return json.dumps(obj, allow_nan=False)


def decode_request(line: str) -> Request:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireProtocolError(f"parse: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise WireProtocolError("parse: request must be an object")
    if not isinstance(obj.get("id"), int):
        raise WireProtocolError("schema: integer 'id' required")
    if obj.get("op") not in VALID_OPS:
        raise WireProtocolError(f"schema: 'op' must be one of {VALID_OPS}")
    features = obj.get("features")
    if features is not None:
        if (not isinstance(features, list)
                or not all(isinstance(row, list) for row in features)):
            raise WireProtocolError("schema: 'features' must be an array of arrays")
    return Request(
        id=obj["id"], op=obj["op"],
        audio_path=obj.get("audio_path", ""),
        start_s=float(obj.get("start_s", 0.0)),
        end_s=float(obj.get("end_s", 0.0)),
        transcript=obj.get("transcript"),
        features=features,
    )


def encode_response(resp: Response) -> str:
    obj: dict = {"id": resp.id, "ok": resp.ok}
    if resp.text is not None:
        obj["text"] = resp.text
    if resp.words is not None:
        obj["words"] = resp.words
    if resp.score is not None:
        obj["score"] = resp.score
    if resp.error is not None:
        obj["error"] = resp.error
    return json.dumps(obj, allow_nan=False)


def decode_response(line: str) -> Response:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireProtocolError(f"parse: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise WireProtocolError("parse: response must be an object")
    if not isinstance(obj.get("id"), int):
        raise WireProtocolError("schema: integer 'id' required")
    if not isinstance(obj.get("ok"), bool):
        raise WireProtocolError("schema: boolean 'ok' required")
    words = obj.get("words")
    if words is not None:
        for w in words:
            if not isinstance(w, dict) or not {"w", "s", "e"} <= set(w):
                raise WireProtocolError("schema: words entries need keys w/s/e")
    return Response(
        id=obj["id"], ok=obj["ok"],
        text=obj.get("text"),
        words=words,
        score=obj.get("score"),
        error=obj.get("error"),
    )
