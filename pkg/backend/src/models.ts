/**
 * Model providers behind each engine role.
 *
 * The bundled providers are fully local reference models (signature
 * transcriber, uniform aligner, energy frame scorer); a heavyweight model
 * wrapper implements the same interface and is selected with --model.
 */

import { DEFAULT_VOCABULARY, decodeWords } from "./signature";
import { normalizeTokens } from "./textnorm";
import { WavData, readWav, sliceSegment } from "./wav";

export type Role = "transcriber" | "forced_aligner" | "frame_scorer";

export interface TranscribeArgs {
  audioPath: string;
  startS: number;
  endS: number;
  /* Multilingual ASR wrappers must pin these rather than auto-detect. */
  task: "transcription";
  language: "english";
}

export interface AlignArgs {
  audioPath: string;
  startS: number;
  endS: number;
  transcript: string;
}

export interface WordTiming {
  w: string;
  s: number;
  e: number;
}

export interface ModelProvider {
  role: Role;
  transcribe?(args: TranscribeArgs): string;
  forceAlign?(args: AlignArgs): WordTiming[];
  scoreFrames?(features: number[][]): number;
}

const audioCache = new Map<string, WavData>();

function loadAudio(path: string): WavData {
  let wav = audioCache.get(path);
  if (!wav) {
    wav = readWav(path);
    audioCache.set(path, wav);
  }
  return wav;
}

class SignatureTranscriber implements ModelProvider {
  role: Role = "transcriber";

  transcribe(args: TranscribeArgs): string {
    const wav = loadAudio(args.audioPath);
    const piece = sliceSegment(wav, args.startS, args.endS);
    return decodeWords(piece, DEFAULT_VOCABULARY, wav.rate).join(" ");
  }
}

class UniformAligner implements ModelProvider {
  role: Role = "forced_aligner";

  forceAlign(args: AlignArgs): WordTiming[] {
    if (!args.transcript.trim()) {
      throw new Error("precondition: empty transcript");
    }
    const tokens = normalizeTokens(args.transcript);
    if (tokens.length === 0) {
      throw new Error("alignment: no tokens after normalization");
    }
    // Validates bounds even though timings are derived arithmetically.
    sliceSegment(loadAudio(args.audioPath), args.startS, args.endS);
    const width = (args.endS - args.startS) / tokens.length;
    return tokens.map((w, i) => ({
      w,
      s: args.startS + i * width,
      e: args.startS + (i + 1) * width,
    }));
  }
}

const N_MELS = 64;
const LOG_FLOOR = Math.log(1e-10);
const VAD_CENTER = 2.0;
const VAD_SCALE = 0.6;

class EnergyFrameScorer implements ModelProvider {
  role: Role = "frame_scorer";

  scoreFrames(features: number[][]): number {
    if (features.length !== N_MELS) {
      throw new Error(`shape: expected ${N_MELS} mel rows, got ${features.length}`);
    }
    const nFrames = features[0]?.length ?? 0;
    if (features.some((row) => row.length !== nFrames)) {
      throw new Error("shape: ragged feature matrix");
    }
    if (nFrames === 0) return 0;
    let allFloor = true;
    const frameEnergy = new Float64Array(nFrames);
    for (let t = 0; t < nFrames; t++) {
      let acc = 0;
      for (let b = 0; b < N_MELS; b++) {
        const v = features[b][t];
        if (v > LOG_FLOOR + 1e-9) allFloor = false;
        acc += Math.exp(v);
      }
      frameEnergy[t] = Math.log(acc);
    }
    if (allFloor) return 0;
    const mean = frameEnergy.reduce((a, b) => a + b, 0) / nFrames;
    return 1 / (1 + Math.exp(-(mean - VAD_CENTER) / VAD_SCALE));
  }
}

const PROVIDERS: Record<Role, Record<string, () => ModelProvider>> = {
  transcriber: { signature: () => new SignatureTranscriber() },
  forced_aligner: { uniform: () => new UniformAligner() },
  frame_scorer: { energy: () => new EnergyFrameScorer() },
};

export function createProvider(role: Role, model: string): ModelProvider {
  const factory = PROVIDERS[role]?.[model];
  if (!factory) {
    const known = Object.keys(PROVIDERS[role] ?? {}).join(", ");
    throw new Error(`unknown model ${model} for role ${role} (available: ${known})`);
  }
  return factory();
}
