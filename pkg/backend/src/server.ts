#!/usr/bin/env node
/**
 * Stdio worker speaking the engine wire protocol.
 *
 * Usage: serve --role transcriber|forced_aligner|frame_scorer --model <id>
 *
 * One response line per request line, order preserved, ids echoed. Every
 * failure (malformed JSON, schema violation, wrong op for the role, model
 * error) becomes an ok:false response; the process never crashes on input.
 */

import * as readline from "readline";

import { ModelProvider, Role, createProvider } from "./models";
import { Request, Response, encodeResponse, failure, parseRequestLine } from "./protocol";

export function handleRequest(provider: ModelProvider, req: Request): Response {
  try {
    switch (req.op) {
      case "transcribe": {
        if (!provider.transcribe) {
          return failure(req.id, `unsupported op transcribe for role ${provider.role}`);
        }
        const text = provider.transcribe({
          audioPath: req.audio_path,
          startS: req.start_s,
          endS: req.end_s,
          task: "transcription",
          language: "english",
        });
        return { id: req.id, ok: true, text };
      }
      case "force_align": {
        if (!provider.forceAlign) {
          return failure(req.id, `unsupported op force_align for role ${provider.role}`);
        }
        if (!req.transcript || !req.transcript.trim()) {
          return failure(req.id, "precondition: empty transcript");
        }
        const words = provider.forceAlign({
          audioPath: req.audio_path,
          startS: req.start_s,
          endS: req.end_s,
          transcript: req.transcript,
        });
        return { id: req.id, ok: true, words };
      }
      case "score_frames": {
        if (!provider.scoreFrames) {
          return failure(req.id, `unsupported op score_frames for role ${provider.role}`);
        }
        if (!req.features) {
          return failure(req.id, "precondition: missing features");
        }
        return { id: req.id, ok: true, score: provider.scoreFrames(req.features) };
      }
    }
  } catch (err) {
    return failure(req.id, err instanceof Error ? err.message : String(err));
  }
}

export function handleLine(provider: ModelProvider, line: string): string | null {
  if (!line.trim()) return null;
  const parsed = parseRequestLine(line);
  if (!parsed.request) {
    return encodeResponse(failure(parsed.id, parsed.error ?? "parse: invalid request"));
  }
  return encodeResponse(handleRequest(provider, parsed.request));
}

function parseArgs(argv: string[]): { role: Role; model: string } {
  let role = "";
  let model = "";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--role") role = argv[++i] ?? "";
    else if (argv[i] === "--model") model = argv[++i] ?? "";
  }
  if (!["transcriber", "forced_aligner", "frame_scorer"].includes(role)) {
    throw new Error(`--role must be transcriber|forced_aligner|frame_scorer, got '${role}'`);
  }
  if (!model) throw new Error("--model is required");
  return { role: role as Role, model };
}

export function main(argv: string[]): void {
  if (argv[0] !== "serve") {
    process.stderr.write("usage: serve --role <kind> --model <id>\n");
    process.exit(2);
  }
  let provider: ModelProvider;
  try {
    const { role, model } = parseArgs(argv.slice(1));
    provider = createProvider(role, model);
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    const response = handleLine(provider, line);
    if (response !== null) process.stdout.write(response + "\n");
  });
}

if (require.main === module) {
  main(process.argv.slice(2));
}
