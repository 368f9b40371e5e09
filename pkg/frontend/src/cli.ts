#!/usr/bin/env node
/**
 * embedkit CLI.
 *
 *   embedkit encode   --texts texts.tsv --out embeddings.sebp
 *   embedkit finetune --train train.tsv --texts texts.tsv --out out.sebp \
 *       --enc-lr 5e-6 --head-lr 1e-4 --epochs 3 --seed 1 [--negatives 3]
 *       [--batch 16] [--objective logsigmoid|raw]
 */

import { parseArgs } from "node:util";

import { loadInteractions, loadTexts } from "./corpus.js";
import { encodeRationales, SeededContextEncoder } from "./encoder.js";
import { finetune } from "./finetune.js";
import { writeEmbeddingFile } from "./table.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}

function requireOption(values: Record<string, unknown>, name: string): string {
  const value = values[name];
  if (typeof value !== "string" || value === "") fail(`missing required --${name}`);
  return value;
}

function runEncode(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      texts: { type: "string" },
      out: { type: "string" },
      "weight-seed": { type: "string" },
    },
  });
  const texts = loadTexts(requireOption(values, "texts"));
  const seed = values["weight-seed"] ? Number(values["weight-seed"]) : undefined;
  const encoder = seed === undefined ? new SeededContextEncoder() : new SeededContextEncoder(seed);
  const vectors = encodeRationales(texts, encoder);
  const out = requireOption(values, "out");
  writeEmbeddingFile({ dim: encoder.dim, vectors }, out);
  console.log(`encoded ${vectors.size} rationales (dim ${encoder.dim}) -> ${out}`);
}

function runFinetune(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      train: { type: "string" },
      texts: { type: "string" },
      out: { type: "string" },
      "enc-lr": { type: "string" },
      "head-lr": { type: "string" },
      epochs: { type: "string" },
      seed: { type: "string" },
      negatives: { type: "string" },
      batch: { type: "string" },
      objective: { type: "string" },
      "weight-seed": { type: "string" },
    },
  });
  const records = loadInteractions(requireOption(values, "train"));
  const texts = loadTexts(requireOption(values, "texts"));
  const objective = (values.objective ?? "logsigmoid") as "logsigmoid" | "raw";
  if (objective !== "logsigmoid" && objective !== "raw") fail("--objective must be logsigmoid or raw");
  const config = {
    ...(values["enc-lr"] !== undefined && { encLr: Number(values["enc-lr"]) }),
    ...(values["head-lr"] !== undefined && { headLr: Number(values["head-lr"]) }),
    ...(values.epochs !== undefined && { epochs: Number(values.epochs) }),
    ...(values.seed !== undefined && { seed: Number(values.seed) }),
    ...(values.negatives !== undefined && { negatives: Number(values.negatives) }),
    ...(values.batch !== undefined && { batchSize: Number(values.batch) }),
    objective,
  };
  const encoder = values["weight-seed"] === undefined
    ? new SeededContextEncoder()
    : new SeededContextEncoder(Number(values["weight-seed"]));
  const result = finetune(records, texts, config, encoder);
  result.objectiveCurve.forEach((value, index) => {
    console.log(`epoch ${index + 1} objective ${value.toFixed(6)}`);
  });
  if (result.diverged) console.warn("training diverged; exported the last stable embeddings");
  const out = requireOption(values, "out");
  writeEmbeddingFile(result.table, out);
  console.log(`finetuned ${result.table.vectors.size} rationales -> ${out}`);
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "encode") return runEncode(rest);
  if (command === "finetune") return runFinetune(rest);
  fail("usage: embedkit <encode|finetune> [options]");
}

main();
