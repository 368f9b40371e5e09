/**
 * Readers for the interaction and text TSVs shared with the core ranker.
 */

import { readFileSync } from "node:fs";

export interface InteractionRecord {
  user: string;
  item: string;
  rationales: string[];
}

export function parseInteractions(content: string): InteractionRecord[] {
  const records: InteractionRecord[] = [];
  const lines = content.split("\n");
  for (let lineNo = 1; lineNo <= lines.length; lineNo++) {
    const line = lines[lineNo - 1];
    if (line.trim() === "" || line.startsWith("#")) continue;
    const fields = line.split("\t");
    if (fields.length !== 3) {
      throw new Error(`line ${lineNo}: expected 3 tab-separated fields, got ${fields.length}`);
    }
    const [user, item, rationaleField] = fields;
    if (!user || !item || !rationaleField) throw new Error(`line ${lineNo}: empty field`);
    const rationales: string[] = [];
    for (const rid of rationaleField.split(",")) {
      if (!rid) throw new Error(`line ${lineNo}: empty rationale id`);
      if (!rationales.includes(rid)) rationales.push(rid);
    }
    records.push({ user, item, rationales });
  }
  return records;
}

export function loadInteractions(path: string): InteractionRecord[] {
  return parseInteractions(readFileSync(path, "utf-8"));
}

export function loadTexts(path: string): Map<string, string> {
  const texts = new Map<string, string>();
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let lineNo = 1; lineNo <= lines.length; lineNo++) {
    const line = lines[lineNo - 1];
    if (line.trim() === "" || line.startsWith("#")) continue;
    const tab = line.indexOf("\t");
    if (tab < 0) throw new Error(`line ${lineNo}: expected \`rationale_id<TAB>text\``);
    texts.set(line.slice(0, tab), line.slice(tab + 1));
  }
  return texts;
}
