/**
 * Wire protocol: one JSON request per stdin line, one JSON response per
 * stdout line, matched by `id`. Audio travels by path + segment; the only
 * inline payload is the frame-scorer feature matrix.
 */

import { z } from "zod";

export const OPS = ["transcribe", "force_align", "score_frames"] as const;
export type Op = (typeof OPS)[number];

export const RequestSchema = z.object({
  id: z.number().int(),
  op: z.enum(OPS),
  audio_path: z.string().optional().default(""),
  start_s: z.number().optional().default(0),
  end_s: z.number().optional().default(0),
  transcript: z.string().optional(),
  features: z.array(z.array(z.number())).optional(),
});
export type Request = z.infer<typeof RequestSchema>;

export const WordSchema = z.object({
  w: z.string(),
  s: z.number(),
  e: z.number(),
});

export const ResponseSchema = z.object({
  id: z.number().int(),
  ok: z.boolean(),
  text: z.string().optional(),
  words: z.array(WordSchema).optional(),
  score: z.number().optional(),
  error: z.string().optional(),
});
export type Response = z.infer<typeof ResponseSchema>;

export interface ParsedLine {
  request?: Request;
  /** Populated when the line is not a valid request. */
  error?: string;
  /** Echoed id when one could be extracted from a bad request. */
  id: number;
}

/** Parse one stdin line; never throws. */
export function parseRequestLine(line: string): ParsedLine {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return { id: -1, error: "parse: invalid JSON" };
  }
  const result = RequestSchema.safeParse(raw);
  if (!result.success) {
    const id =
      typeof raw === "object" && raw !== null && Number.isInteger((raw as any).id)
        ? ((raw as any).id as number)
        : -1;
    return { id, error: `schema: ${result.error.issues[0]?.message ?? "invalid request"}` };
  }
  return { id: result.data.id, request: result.data };
}

export function encodeResponse(resp: Response): string {
  return JSON.stringify(resp);
}

export function failure(id: number, error: string): Response {
  return { id, ok: false, error };
}
