import { describe, expect, it } from "vitest";

import { parseInteractions } from "../src/corpus.js";

describe("parseInteractions", () => {
  it("parses records and dedups rationales within a line", () => {
    const records = parseInteractions("# comment\nu1\ti1\te1,e2,e1\n\nu2\ti2\te3\n");
    expect(records).toEqual([
      { user: "u1", item: "i1", rationales: ["e1", "e2"] },
      { user: "u2", item: "i2", rationales: ["e3"] },
    ]);
  });

  it("reports malformed lines with their number", () => {
    expect(() => parseInteractions("u1\ti1\te1\nu2\ti2\n")).toThrow(/line 2/);
    expect(() => parseInteractions("u1\ti1\te1,,e2\n")).toThrow(/empty rationale/);
  });
});
