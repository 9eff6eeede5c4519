import { describe, expect, it } from "vitest";

import { ResponseSchema, encodeResponse, failure, parseRequestLine } from "../src/protocol";

describe("parseRequestLine", () => {
  it("round-trips a valid transcribe request", () => {
    const line = JSON.stringify({
      id: 7, op: "transcribe", audio_path: "a.wav", start_s: 0.5, end_s: 2.0,
    });
    const parsed = parseRequestLine(line);
    expect(parsed.error).toBeUndefined();
    expect(parsed.request?.id).toBe(7);
    expect(parsed.request?.op).toBe("transcribe");
  });

  it("flags malformed JSON with id -1", () => {
    const parsed = parseRequestLine("this is not json");
    expect(parsed.id).toBe(-1);
    expect(parsed.error).toContain("parse");
  });

  it("echoes the id of schema-invalid requests when present", () => {
    const parsed = parseRequestLine(JSON.stringify({ id: 42, op: "explode" }));
    expect(parsed.id).toBe(42);
    expect(parsed.error).toContain("schema");
  });

  it("rejects non-integer ids", () => {
    const parsed = parseRequestLine(JSON.stringify({ id: "x", op: "transcribe" }));
    expect(parsed.id).toBe(-1);
    expect(parsed.error).toBeDefined();
  });

  it("accepts an inline feature matrix", () => {
    const parsed = parseRequestLine(JSON.stringify({
      id: 1, op: "score_frames", features: [[1, 2], [3, 4]],
    }));
    expect(parsed.request?.features).toEqual([[1, 2], [3, 4]]);
  });

  it("rejects ragged feature payload types", () => {
    const parsed = parseRequestLine(JSON.stringify({
      id: 1, op: "score_frames", features: [["a"]],
    }));
    expect(parsed.error).toBeDefined();
  });
});

describe("responses", () => {
  it("encodes schema-valid success and failure", () => {
    const ok = JSON.parse(encodeResponse({ id: 1, ok: true, text: "hi" }));
    const bad = JSON.parse(encodeResponse(failure(2, "nope")));
    expect(ResponseSchema.safeParse(ok).success).toBe(true);
    expect(ResponseSchema.safeParse(bad).success).toBe(true);
    expect(bad.ok).toBe(false);
    expect(bad.error).toBe("nope");
  });

  it("validates word timing entries", () => {
    const resp = {
      id: 3, ok: true,
      words: [{ w: "hello", s: 0.1, e: 0.4 }, { w: "there", s: 0.4, e: 0.9 }],
    };
    expect(ResponseSchema.safeParse(resp).success).toBe(true);
    expect(ResponseSchema.safeParse({ id: 3, ok: true, words: [{ w: "x" }] }).success)
      .toBe(false);
  });
});
