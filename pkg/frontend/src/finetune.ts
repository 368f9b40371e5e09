/**
 * Task-specific finetuning of rationale embeddings.
 *
 * The scorer is a single fully connected layer with no bias over the
 * concatenation [user; item; rationale] (3 x 768 inputs -> scalar).  The
 * objective pushes every observed rationale above sampled negatives:
 * maximize ln sigmoid(f(pos) - f(neg)) (or the raw difference with
 * `objective: "raw"`), negatives drawn uniformly outside the union of
 * the user's and item's observed rationale sets.
 *
 * Trainable leaves are the per-rationale embedding vectors (the
 * encoder's output representations, stepped with `encLr`) and the head
 * (`headLr`), both under Adam.  User and item vectors are not trained:
 * they are recomputed after every epoch as the arithmetic mean of the
 * current embeddings in their histories.  Note that with a linear head
 * the user/item blocks cancel inside f(pos) - f(neg), so gradient flows
 * only to the rationale block and the embeddings; that cancellation is
 * inherent to a bias-free linear head, not an implementation shortcut.
 */

import type { InteractionRecord } from "./corpus.js";
import { encodeRationales, type TextEncoder } from "./encoder.js";
import { Rng } from "./rng.js";
import type { EmbeddingTable } from "./table.js";

export interface FinetuneConfig {
  encLr: number;
  headLr: number;
  negatives: number;
  epochs: number;
  seed: number;
  batchSize: number;
  objective: "logsigmoid" | "raw";
}

export const DEFAULT_CONFIG: FinetuneConfig = {
  encLr: 5e-6,
  headLr: 1e-4,
  negatives: 3,
  epochs: 3,
  seed: 0,
  batchSize: 16,
  objective: "logsigmoid",
};

export interface ScoringHead {
  user: Float64Array;
  item: Float64Array;
  rationale: Float64Array;
}

export function headInputWidth(head: ScoringHead): number {
  return head.user.length + head.item.length + head.rationale.length;
}

export function headScore(
  head: ScoringHead,
  user: Float64Array,
  item: Float64Array,
  rationale: Float64Array,
): number {
  let score = 0;
  for (let d = 0; d < head.user.length; d++) score += head.user[d] * user[d];
  for (let d = 0; d < head.item.length; d++) score += head.item[d] * item[d];
  for (let d = 0; d < head.rationale.length; d++) score += head.rationale[d] * rationale[d];
  return score;
}

export function makeHead(dim: number, seed: number): ScoringHead {
  const rng = new Rng((seed ^ 0x7ead) >>> 0);
  const block = () => {
    const w = new Float64Array(dim);
    for (let d = 0; d < dim; d++) w[d] = rng.gauss() * 0.02;
    return w;
  };
  return { user: block(), item: block(), rationale: block() };
}

export interface Histories {
  userIds: string[];
  itemIds: string[];
  rationaleIds: string[];
  rationaleIndex: Map<string, number>;
  userIndex: Map<string, number>;
  itemIndex: Map<string, number>;
  eU: Set<number>[];
  eI: Set<number>[];
  triplets: Array<[number, number, number]>;
}

export function buildHistories(
  records: InteractionRecord[],
  rationaleIds: string[],
): Histories {
  const rationaleIndex = new Map(rationaleIds.map((rid, k) => [rid, k] as const));
  const userIndex = new Map<string, number>();
  const itemIndex = new Map<string, number>();
  const userIds: string[] = [];
  const itemIds: string[] = [];
  const eU: Set<number>[] = [];
  const eI: Set<number>[] = [];
  const triplets: Array<[number, number, number]> = [];
  for (const rec of records) {
    if (!userIndex.has(rec.user)) {
      userIndex.set(rec.user, userIds.length);
      userIds.push(rec.user);
      eU.push(new Set());
    }
    if (!itemIndex.has(rec.item)) {
      itemIndex.set(rec.item, itemIds.length);
      itemIds.push(rec.item);
      eI.push(new Set());
    }
    const u = userIndex.get(rec.user)!;
    const i = itemIndex.get(rec.item)!;
    for (const rid of rec.rationales) {
      const e = rationaleIndex.get(rid);
      if (e === undefined) throw new Error(`no text for rationale ${JSON.stringify(rid)}`);
      eU[u].add(e);
      eI[i].add(e);
      triplets.push([u, i, e]);
    }
  }
  return { userIds, itemIds, rationaleIds, rationaleIndex, userIndex, itemIndex, eU, eI, triplets };
}

/** Arithmetic mean of the current embeddings over each history set. */
export function historyMeans(
  embeddings: Float64Array[],
  histories: Set<number>[],
  dim: number,
  fallback: Float64Array,
): Float64Array[] {
  return histories.map((set) => {
    if (set.size === 0) return Float64Array.from(fallback);
    const mean = new Float64Array(dim);
    for (const e of [...set].sort((a, b) => a - b)) {
      const vec = embeddings[e];
      for (let d = 0; d < dim; d++) mean[d] += vec[d];
    }
    for (let d = 0; d < dim; d++) mean[d] /= set.size;
    return mean;
  });
}

function globalMean(embeddings: Float64Array[], dim: number): Float64Array {
  const mean = new Float64Array(dim);
  for (const vec of embeddings) for (let d = 0; d < dim; d++) mean[d] += vec[d];
  for (let d = 0; d < dim; d++) mean[d] /= embeddings.length;
  return mean;
}

function logSigmoid(x: number): number {
  return x > 0 ? -Math.log1p(Math.exp(-x)) : x - Math.log1p(Math.exp(x));
}

function sigmoid(x: number): number {
  return 0.5 * (Math.tanh(0.5 * x) + 1.0);
}

class Adam {
  t = 0;
  private m = new Map<string, Float64Array>();
  private v = new Map<string, Float64Array>();

  step(): void {
    this.t += 1;
  }

  /** In-place Adam update of one parameter vector under the key. */
  update(key: string, param: Float64Array, grad: Float64Array, lr: number): void {
    let m = this.m.get(key);
    let v = this.v.get(key);
    if (!m || !v) {
      m = new Float64Array(param.length);
      v = new Float64Array(param.length);
      this.m.set(key, m);
      this.v.set(key, v);
    }
    const bc1 = 1 - Math.pow(0.9, this.t);
    const bc2 = 1 - Math.pow(0.999, this.t);
    for (let d = 0; d < param.length; d++) {
      const g = grad[d];
      m[d] = 0.9 * m[d] + 0.1 * g;
      v[d] = 0.999 * v[d] + 0.001 * g * g;
      param[d] -= (lr * (m[d] / bc1)) / (Math.sqrt(v[d] / bc2) + 1e-8);
    }
  }
}

export interface FinetuneResult {
  table: EmbeddingTable;
  head: ScoringHead;
  histories: Histories;
  objectiveCurve: number[];
  diverged: boolean;
  score: (user: string, item: string, rationaleId: string) => number;
}

export function finetune(
  records: InteractionRecord[],
  texts: Map<string, string>,
  config: Partial<FinetuneConfig> = {},
  encoder?: TextEncoder,
): FinetuneResult {
  const cfg: FinetuneConfig = { ...DEFAULT_CONFIG, ...config };
  if (cfg.encLr < 0 || cfg.headLr < 0) throw new Error("learning rates must be non-negative");
  if (cfg.negatives < 1) throw new Error("negatives must be >= 1");

  const encoded = encodeRationales(texts, encoder);
  const rationaleIds = [...encoded.keys()];
  const histories = buildHistories(records, rationaleIds);
  const dim = encoded.get(rationaleIds[0])!.length;
  const nRationales = rationaleIds.length;

  let embeddings = rationaleIds.map((rid) => Float64Array.from(encoded.get(rid)!));
  let head = makeHead(dim, cfg.seed);
  const adam = new Adam();
  const rng = new Rng((cfg.seed ^ 0x5a11) >>> 0);
  const order = Int32Array.from(histories.triplets.keys());
  const objectiveCurve: number[] = [];
  let diverged = false;

  let userMeans = historyMeans(embeddings, histories.eU, dim, globalMean(embeddings, dim));
  let itemMeans = historyMeans(embeddings, histories.eI, dim, globalMean(embeddings, dim));

  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    const embSnapshot = embeddings.map((vec) => Float64Array.from(vec));
    const headSnapshot: ScoringHead = {
      user: Float64Array.from(head.user),
      item: Float64Array.from(head.item),
      rationale: Float64Array.from(head.rationale),
    };
    rng.shuffle(order);
    let objSum = 0;
    let terms = 0;

    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const stop = Math.min(start + cfg.batchSize, order.length);
      const gradHead = new Float64Array(dim);
      const gradEmb = new Map<number, Float64Array>();
      const embGrad = (e: number): Float64Array => {
        let g = gradEmb.get(e);
        if (!g) {
          g = new Float64Array(dim);
          gradEmb.set(e, g);
        }
        return g;
      };

      for (let k = start; k < stop; k++) {
        const [u, i, e] = histories.triplets[order[k]];
        const p = userMeans[u];
        const q = itemMeans[i];
        const excluded = new Set([...histories.eU[u], ...histories.eI[i]]);
        if (excluded.size >= nRationales) {
          throw new Error("cannot sample negatives: histories cover every rationale");
        }
        const fPos = headScore(head, p, q, embeddings[e]);
        for (let neg = 0; neg < cfg.negatives; neg++) {
          let candidate = rng.int(nRationales);
          while (excluded.has(candidate)) candidate = rng.int(nRationales);
          const fNeg = headScore(head, p, q, embeddings[candidate]);
          const delta = fPos - fNeg;
          objSum += cfg.objective === "raw" ? delta : logSigmoid(delta);
          terms += 1;
          // d(loss)/d(delta), minimizing loss = -objective
          const g = cfg.objective === "raw" ? -1.0 : sigmoid(delta) - 1.0;
          const ePos = embeddings[e];
          const eNeg = embeddings[candidate];
          const gPos = embGrad(e);
          const gNeg = embGrad(candidate);
          for (let d = 0; d < dim; d++) {
            gradHead[d] += g * (ePos[d] - eNeg[d]);
            gPos[d] += g * head.rationale[d];
            gNeg[d] -= g * head.rationale[d];
          }
        }
      }

      adam.step();
      adam.update("head.rationale", head.rationale, gradHead, cfg.headLr);
      for (const [e, grad] of gradEmb) {
        adam.update(`emb.${e}`, embeddings[e], grad, cfg.encLr);
      }
    }

    const objective = objSum / Math.max(terms, 1);
    if (!Number.isFinite(objective)) {
      embeddings = embSnapshot;
      head = headSnapshot;
      diverged = true;
      console.warn(`embedkit: non-finite objective at epoch ${epoch}; `
        + "keeping the previous epoch's embeddings");
      break;
    }
    objectiveCurve.push(objective);
    userMeans = historyMeans(embeddings, histories.eU, dim, globalMean(embeddings, dim));
    itemMeans = historyMeans(embeddings, histories.eI, dim, globalMean(embeddings, dim));
  }

  const fallback = globalMean(embeddings, dim);
  const vectors = new Map<string, Float32Array>();
  rationaleIds.forEach((rid, e) => {
    const out = new Float32Array(dim);
    for (let d = 0; d < dim; d++) out[d] = Math.fround(embeddings[e][d]);
    vectors.set(rid, out);
  });
  const finalHead = head;
  const score = (user: string, item: string, rationaleId: string): number => {
    const e = histories.rationaleIndex.get(rationaleId);
    if (e === undefined) throw new Error(`unknown rationale ${JSON.stringify(rationaleId)}`);
    const u = histories.userIndex.get(user);
    const i = histories.itemIndex.get(item);
    const p = u === undefined ? fallback : userMeans[u];
    const q = i === undefined ? fallback : itemMeans[i];
    return headScore(finalHead, p, q, embeddings[e]);
  };

  return {
    table: { dim, vectors },
    head,
    histories,
    objectiveCurve,
    diverged,
    score,
  };
}

/**
 * Fraction of held-out (pos, sampled-neg) comparisons the scorer gets
 * right; negatives are drawn outside each record's own rationale set.
 */
export function pairwiseAccuracy(
  result: FinetuneResult,
  heldout: InteractionRecord[],
  negatives: number,
  seed: number,
): number {
  const rng = new Rng((seed ^ 0xacc) >>> 0);
  const ids = result.histories.rationaleIds;
  let wins = 0;
  let total = 0;
  for (const rec of heldout) {
    const own = new Set(rec.rationales);
    for (const rid of rec.rationales) {
      if (!result.histories.rationaleIndex.has(rid)) continue;
      const fPos = result.score(rec.user, rec.item, rid);
      for (let k = 0; k < negatives; k++) {
        let candidate = ids[rng.int(ids.length)];
        while (own.has(candidate)) candidate = ids[rng.int(ids.length)];
        if (fPos > result.score(rec.user, rec.item, candidate)) wins += 1;
        total += 1;
      }
    }
  }
  if (total === 0) throw new Error("no scorable held-out comparisons");
  return wins / total;
}
