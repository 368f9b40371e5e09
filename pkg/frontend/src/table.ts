/**
 * The binary embedding exchange format shared with the core ranker.
 *
 * Little-endian layout: magic "SEBP", version u32, record count u64,
 * dimension u32; then per record: id length u16, UTF-8 id bytes,
 * dimension x f32.  Records sorted by id, so an unchanged table always
 * serializes to identical bytes.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "SEBP";
export const VERSION = 1;

export interface EmbeddingTable {
  dim: number;
  vectors: Map<string, Float32Array>;
}

export function serialize(table: EmbeddingTable): Buffer {
  if (table.vectors.size === 0) throw new Error("refusing to write an empty embedding table");
  const ids = [...table.vectors.keys()].sort();
  const encoder = new TextEncoder();
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(20);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeBigUInt64LE(BigInt(ids.length), 8);
  header.writeUInt32LE(table.dim, 16);
  chunks.push(header);
  for (const rid of ids) {
    const vec = table.vectors.get(rid)!;
    if (vec.length !== table.dim) {
      throw new Error(`vector for ${JSON.stringify(rid)} has length ${vec.length}, expected ${table.dim}`);
    }
    for (const value of vec) {
      if (!Number.isFinite(value)) throw new Error(`non-finite value in vector for ${JSON.stringify(rid)}`);
    }
    const idBytes = Buffer.from(encoder.encode(rid));
    const rec = Buffer.alloc(2 + idBytes.length + 4 * table.dim);
    rec.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(rec, 2);
    for (let d = 0; d < table.dim; d++) rec.writeFloatLE(vec[d], 2 + idBytes.length + 4 * d);
    chunks.push(rec);
  }
  return Buffer.concat(chunks);
}

export function writeEmbeddingFile(table: EmbeddingTable, path: string): void {
  writeFileSync(path, serialize(table));
}

export function readEmbeddingFile(path: string): EmbeddingTable {
  const data = readFileSync(path);
  let offset = 0;
  const take = (n: number, what: string): Buffer => {
    if (offset + n > data.length) {
      throw new Error(`truncated embedding file: needed ${n} bytes for ${what} at byte ${offset}`);
    }
    const chunk = data.subarray(offset, offset + n);
    offset += n;
    return chunk;
  };
  const header = take(20, "header");
  if (header.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(header.toString("ascii", 0, 4))} at byte 0`);
  }
  if (header.readUInt32LE(4) !== VERSION) {
    throw new Error(`unsupported version ${header.readUInt32LE(4)}`);
  }
  const count = Number(header.readBigUInt64LE(8));
  const dim = header.readUInt32LE(16);
  const vectors = new Map<string, Float32Array>();
  for (let k = 0; k < count; k++) {
    const idLen = take(2, "id length").readUInt16LE(0);
    const rid = take(idLen, "id bytes").toString("utf-8");
    const payload = take(4 * dim, `vector for ${rid}`);
    if (vectors.has(rid)) throw new Error(`duplicate id ${JSON.stringify(rid)}`);
    const vec = new Float32Array(dim);
    for (let d = 0; d < dim; d++) vec[d] = payload.readFloatLE(4 * d);
    vectors.set(rid, vec);
  }
  if (offset !== data.length) throw new Error(`${data.length - offset} trailing bytes at byte ${offset}`);
  return { dim, vectors };
}
