/**
 * Deterministic contextual text encoder.
 *
 * A compact transformer-style encoder whose weights are generated from a
 * fixed seed, standing in for a downloaded pretrained checkpoint (this
 * toolkit runs fully offline).  Architecture: hashed token embeddings
 * plus learned positions at a small width, two self-attention blocks
 * with feed-forward sublayers and layer norm, and a factorized output
 * projection from the internal width up to the 768-dimensional output
 * read at the leading classification position.
 *
 * Any alternative encoder can be used instead as long as it satisfies
 * `TextEncoder`; everything downstream only sees id -> 768-vector.
 */

import { Rng } from "./rng.js";

export interface TextEncoder {
  readonly dim: number;
  encode(text: string): Float32Array;
}

export const OUTPUT_DIM = 768;

const VOCAB = 2048;
const EMBED = 64; // token-embedding width (factorized, smaller than hidden)
const HIDDEN = 128;
const HEADS = 4;
const MAX_TOKENS = 48; // including the classification slot
const CLS_ID = 0;
const DEFAULT_WEIGHT_SEED = 0x5eba11;

/** FNV-1a hash of a token into [2, VOCAB). Ids 0/1 are reserved. */
function tokenId(token: string): number {
  let h = 0x811c9dc5;
  for (let k = 0; k < token.length; k++) {
    h ^= token.charCodeAt(k);
    h = Math.imul(h, 0x01000193);
  }
  return 2 + ((h >>> 0) % (VOCAB - 2));
}

export function tokenize(text: string): number[] {
  const ids = [CLS_ID];
  for (const token of text.toLowerCase().split(/[^a-z0-9']+/)) {
    if (token.length > 0 && ids.length < MAX_TOKENS) ids.push(tokenId(token));
  }
  return ids;
}

function matrix(rng: Rng, rows: number, cols: number, scale: number): Float64Array {
  const out = new Float64Array(rows * cols);
  for (let k = 0; k < out.length; k++) out[k] = rng.gauss() * scale;
  return out;
}

/** y = x @ W for row-major W of shape (input, output). */
function matmulRow(x: Float64Array, w: Float64Array, input: number, output: number): Float64Array {
  const y = new Float64Array(output);
  for (let i = 0; i < input; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const base = i * output;
    for (let j = 0; j < output; j++) y[j] += xi * w[base + j];
  }
  return y;
}

function layerNorm(x: Float64Array): void {
  let mean = 0;
  for (const v of x) mean += v;
  mean /= x.length;
  let varsum = 0;
  for (const v of x) varsum += (v - mean) * (v - mean);
  const inv = 1.0 / Math.sqrt(varsum / x.length + 1e-6);
  for (let k = 0; k < x.length; k++) x[k] = (x[k] - mean) * inv;
}

function gelu(v: number): number {
  return 0.5 * v * (1.0 + Math.tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
}

interface Block {
  wq: Float64Array;
  wk: Float64Array;
  wv: Float64Array;
  wo: Float64Array;
  ff1: Float64Array;
  ff2: Float64Array;
}

export class SeededContextEncoder implements TextEncoder {
  readonly dim = OUTPUT_DIM;
  private tokenEmb: Float64Array;
  private posEmb: Float64Array;
  private inputProj: Float64Array;
  private blocks: Block[];
  private outputProj: Float64Array;
  private warnedEmpty = 0;

  constructor(weightSeed: number = DEFAULT_WEIGHT_SEED) {
    const rng = new Rng(weightSeed);
    this.tokenEmb = matrix(rng, VOCAB, EMBED, 0.1);
    this.posEmb = matrix(rng, MAX_TOKENS, EMBED, 0.1);
    this.inputProj = matrix(rng, EMBED, HIDDEN, 1.0 / Math.sqrt(EMBED));
    this.blocks = [];
    for (let b = 0; b < 2; b++) {
      this.blocks.push({
        wq: matrix(rng, HIDDEN, HIDDEN, 1.0 / Math.sqrt(HIDDEN)),
        wk: matrix(rng, HIDDEN, HIDDEN, 1.0 / Math.sqrt(HIDDEN)),
        wv: matrix(rng, HIDDEN, HIDDEN, 1.0 / Math.sqrt(HIDDEN)),
        wo: matrix(rng, HIDDEN, HIDDEN, 1.0 / Math.sqrt(HIDDEN)),
        ff1: matrix(rng, HIDDEN, 2 * HIDDEN, 1.0 / Math.sqrt(HIDDEN)),
        ff2: matrix(rng, 2 * HIDDEN, HIDDEN, 1.0 / Math.sqrt(2 * HIDDEN)),
      });
    }
    this.outputProj = matrix(rng, HIDDEN, OUTPUT_DIM, 1.0 / Math.sqrt(HIDDEN));
  }

  encode(text: string): Float32Array {
    const ids = tokenize(text);
    if (ids.length === 1 && this.warnedEmpty++ < 5) {
      console.warn(`embedkit: empty text encoded as-is (${JSON.stringify(text)})`);
    }
    const n = ids.length;
    // token + position embeddings, projected to the working width
    let states: Float64Array[] = [];
    for (let t = 0; t < n; t++) {
      const x = new Float64Array(EMBED);
      const tokBase = ids[t] * EMBED;
      const posBase = t * EMBED;
      for (let k = 0; k < EMBED; k++) x[k] = this.tokenEmb[tokBase + k] + this.posEmb[posBase + k];
      const h = matmulRow(x, this.inputProj, EMBED, HIDDEN);
      layerNorm(h);
      states.push(h);
    }

    const headDim = HIDDEN / HEADS;
    for (const block of this.blocks) {
      const q = states.map((h) => matmulRow(h, block.wq, HIDDEN, HIDDEN));
      const k = states.map((h) => matmulRow(h, block.wk, HIDDEN, HIDDEN));
      const v = states.map((h) => matmulRow(h, block.wv, HIDDEN, HIDDEN));
      const mixed: Float64Array[] = [];
      for (let t = 0; t < n; t++) {
        const concat = new Float64Array(HIDDEN);
        for (let head = 0; head < HEADS; head++) {
          const off = head * headDim;
          const scores = new Float64Array(n);
          let max = -Infinity;
          for (let s = 0; s < n; s++) {
            let dot = 0;
            for (let d = 0; d < headDim; d++) dot += q[t][off + d] * k[s][off + d];
            scores[s] = dot / Math.sqrt(headDim);
            if (scores[s] > max) max = scores[s];
          }
          let z = 0;
          for (let s = 0; s < n; s++) {
            scores[s] = Math.exp(scores[s] - max);
            z += scores[s];
          }
          for (let s = 0; s < n; s++) {
            const weight = scores[s] / z;
            for (let d = 0; d < headDim; d++) concat[off + d] += weight * v[s][off + d];
          }
        }
        mixed.push(matmulRow(concat, block.wo, HIDDEN, HIDDEN));
      }
      for (let t = 0; t < n; t++) {
        const h = states[t];
        for (let d = 0; d < HIDDEN; d++) h[d] += mixed[t][d];
        layerNorm(h);
        const ff = matmulRow(h, block.ff1, HIDDEN, 2 * HIDDEN);
        for (let d = 0; d < 2 * HIDDEN; d++) ff[d] = gelu(ff[d]);
        const back = matmulRow(ff, block.ff2, 2 * HIDDEN, HIDDEN);
        for (let d = 0; d < HIDDEN; d++) h[d] += back[d];
        layerNorm(h);
      }
    }

    const out = matmulRow(states[0], this.outputProj, HIDDEN, OUTPUT_DIM);
    const result = new Float32Array(OUTPUT_DIM);
    for (let d = 0; d < OUTPUT_DIM; d++) result[d] = Math.fround(out[d]);
    return result;
  }
}

/** Encode every rationale text; ids keep their given order. */
export function encodeRationales(
  texts: Map<string, string>,
  encoder: TextEncoder = new SeededContextEncoder(),
): Map<string, Float32Array> {
  if (texts.size === 0) throw new Error("no rationale texts to encode");
  const out = new Map<string, Float32Array>();
  for (const [rid, text] of texts) out.set(rid, encoder.encode(text));
  return out;
}
