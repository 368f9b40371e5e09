/**
 * Regenerate the cross-component interchange fixture: encode the
 * 20-rationale fixture texts and write the result both to the frontend
 * fixtures and into the core package's test data.  Deterministic, so
 * reruns are byte-identical.
 */

import { mkdirSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { loadTexts } from "./corpus.js";
import { encodeRationales, SeededContextEncoder } from "./encoder.js";
import { writeEmbeddingFile } from "./table.js";

const here = dirname(fileURLToPath(import.meta.url));
const frontendRoot = join(here, "..");
const repoRoot = join(frontendRoot, "..");

const texts = loadTexts(join(frontendRoot, "fixtures", "texts.tsv"));
const encoder = new SeededContextEncoder();
const table = { dim: encoder.dim, vectors: encodeRationales(texts, encoder) };

for (const target of [
  join(frontendRoot, "fixtures", "encoded.sebp"),
  join(repoRoot, "tests", "data", "embedkit_fixture.sebp"),
]) {
  mkdirSync(dirname(target), { recursive: true });
  writeEmbeddingFile(table, target);
  console.log(`wrote ${table.vectors.size} x ${table.dim} -> ${target}`);
}
