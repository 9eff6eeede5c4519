/** Minimal reader for 16-bit PCM mono WAV at 16 kHz. */

import * as fs from "fs";

export const SAMPLE_RATE = 16000;

export interface WavData {
  samples: Float64Array;
  rate: number;
}

export function readWav(path: string, expectRate: number | null = SAMPLE_RATE): WavData {
  const buf = fs.readFileSync(path);
  if (buf.length < 44 || buf.toString("ascii", 0, 4) !== "RIFF" ||
      buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }
  let offset = 12;
  let rate = 0;
  let channels = 0;
  let bits = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buf.length) {
    const chunkId = buf.toString("ascii", offset, offset + 4);
    const chunkSize = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      const format = buf.readUInt16LE(body);
      if (format !== 1) throw new Error(`${path}: expected PCM, got format ${format}`);
      channels = buf.readUInt16LE(body + 2);
      rate = buf.readUInt32LE(body + 4);
      bits = buf.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      data = buf.subarray(body, body + chunkSize);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (!data) throw new Error(`${path}: missing data chunk`);
  if (channels !== 1) throw new Error(`${path}: expected mono, got ${channels} channels`);
  if (bits !== 16) throw new Error(`${path}: expected 16-bit PCM, got ${bits}-bit`);
  if (expectRate !== null && rate !== expectRate) {
    throw new Error(`${path}: expected ${expectRate} Hz, got ${rate} Hz`);
  }
  const samples = new Float64Array(data.length >> 1);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = data.readInt16LE(i * 2) / 32767;
  }
  return { samples, rate };
}

/** Slice [startS, endS) by sample index; throws when out of bounds. */
export function sliceSegment(wav: WavData, startS: number, endS: number): Float64Array {
  const i0 = Math.round(startS * wav.rate);
  const i1 = Math.round(endS * wav.rate);
  if (i0 < 0 || i1 > wav.samples.length || i0 >= i1) {
    throw new Error(
      `segment [${startS}, ${endS}] outside audio of ${wav.samples.length / wav.rate}s`);
  }
  return wav.samples.subarray(i0, i1);
}
