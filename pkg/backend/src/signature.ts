/**
 * Tone-pair pseudo-speech codec, matching the synthetic-corpus format: a
 * word is a 250 ms two-tone complex (one low-band, one high-band tone
 * selected by codebook index) under a Hann envelope, followed by 50 ms of
 * silence. Decoding detects active regions by frame energy and reads the
 * tone pair per region with Goertzel filters at the codebook frequencies.
 */

import { SAMPLE_RATE } from "./wav";

export const WORD_SIGNAL_S = 0.25;
export const WORD_GAP_S = 0.05;

const LO_BASE = 500;
const LO_STEP = 100;
const HI_BASE = 2000;
const HI_STEP = 150;
const N_LO = 8;
const N_HI = 8;
const TONE_AMPLITUDE = 0.35;

const MIN_REGION_S = 0.1;
const ABS_FLOOR = 0.02;
const REL_THRESHOLD = 0.35;

export const DEFAULT_VOCABULARY: readonly string[] = [
  "okay", "yeah", "no", "yes", "stop", "hold", "on", "please", "thank", "you",
  "sir", "ma'am", "license", "registration", "insurance", "vehicle", "plate",
  "driver", "window", "door", "step", "out", "hands", "wheel", "slow", "down",
  "speed", "limit", "light", "signal", "lane", "turn", "road", "traffic",
  "citation", "warning", "ticket", "court", "sign", "here", "name", "address",
  "birth", "day", "today", "tonight", "morning", "going", "coming", "from",
  "where", "what", "why", "how", "long", "fast", "red", "green", "pulled",
  "over", "just", "moment", "right", "back",
];

export function wordFrequencies(index: number): [number, number] {
  if (index < 0 || index >= N_LO * N_HI) {
    throw new Error(`codebook index out of range: ${index}`);
  }
  return [LO_BASE + LO_STEP * (index % N_LO), HI_BASE + HI_STEP * Math.floor(index / N_LO)];
}

/** Render words back-to-back; used by tests to build known audio. */
export function encodeUtterance(
  words: string[],
  vocabulary: readonly string[] = DEFAULT_VOCABULARY,
  rate: number = SAMPLE_RATE,
): Float64Array {
  const slot = Math.round((WORD_SIGNAL_S + WORD_GAP_S) * rate);
  const signalLen = Math.round(WORD_SIGNAL_S * rate);
  const out = new Float64Array(slot * words.length - Math.round(WORD_GAP_S * rate));
  words.forEach((word, k) => {
    const index = vocabulary.indexOf(word);
    if (index < 0) throw new Error(`word not in vocabulary: ${word}`);
    const [fLo, fHi] = wordFrequencies(index);
    for (let i = 0; i < signalLen; i++) {
      const t = i / rate;
      // Matches numpy.hanning(n): 0.5 - 0.5 cos(2 pi i / (n - 1)).
      const env = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (signalLen - 1));
      out[k * slot + i] =
        TONE_AMPLITUDE * env *
        (Math.sin(2 * Math.PI * fLo * t) + Math.sin(2 * Math.PI * fHi * t));
    }
  });
  return out;
}

function goertzelPower(samples: Float64Array, freq: number, rate: number): number {
  const w = (2 * Math.PI * freq) / rate;
  const coeff = 2 * Math.cos(w);
  let s0 = 0;
  let s1 = 0;
  let s2 = 0;
  for (let i = 0; i < samples.length; i++) {
    s0 = samples[i] + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

function activeRegions(samples: Float64Array, rate: number): Array<[number, number]> {
  const frameLen = Math.round(0.025 * rate);
  const hop = Math.round(0.01 * rate);
  if (samples.length < frameLen) return [];
  const nFrames = Math.floor((samples.length - frameLen) / hop) + 1;
  const rms = new Float64Array(nFrames);
  let peak = 0;
  for (let f = 0; f < nFrames; f++) {
    let acc = 0;
    for (let i = f * hop; i < f * hop + frameLen; i++) acc += samples[i] * samples[i];
    rms[f] = Math.sqrt(acc / frameLen);
    peak = Math.max(peak, rms[f]);
  }
  if (peak < ABS_FLOOR) return [];
  const threshold = Math.max(ABS_FLOOR, REL_THRESHOLD * peak);
  const regions: Array<[number, number]> = [];
  let start: number | null = null;
  for (let f = 0; f < nFrames; f++) {
    if (rms[f] > threshold && start === null) start = f;
    else if (rms[f] <= threshold && start !== null) {
      regions.push([start * hop, (f - 1) * hop + frameLen]);
      start = null;
    }
  }
  if (start !== null) regions.push([start * hop, (nFrames - 1) * hop + frameLen]);
  return regions;
}

function bestTone(region: Float64Array, base: number, step: number, count: number,
                  rate: number): number | null {
  const powers: number[] = [];
  for (let k = 0; k < count; k++) {
    powers.push(goertzelPower(region, base + k * step, rate));
  }
  let best = 0;
  for (let k = 1; k < count; k++) if (powers[k] > powers[best]) best = k;
  const sorted = [...powers].sort((a, b) => a - b);
  const median = sorted[Math.floor(count / 2)];
  // A real signature tone dominates the rest of its band decisively.
  if (powers[best] <= 0 || powers[best] < 4 * Math.max(median, 1e-12)) return null;
  return best;
}

export function decodeWords(
  samples: Float64Array,
  vocabulary: readonly string[] = DEFAULT_VOCABULARY,
  rate: number = SAMPLE_RATE,
): string[] {
  const words: string[] = [];
  const minLen = Math.round(MIN_REGION_S * rate);
  for (const [i0, i1] of activeRegions(samples, rate)) {
    if (i1 - i0 < minLen) continue;
    const region = samples.subarray(i0, i1);
    const lo = bestTone(region, LO_BASE, LO_STEP, N_LO, rate);
    const hi = bestTone(region, HI_BASE, HI_STEP, N_HI, rate);
    if (lo === null || hi === null) continue;
    const index = lo + N_LO * hi;
    if (index < vocabulary.length) words.push(vocabulary[index]);
  }
  return words;
}
