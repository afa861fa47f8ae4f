import { describe, expect, it } from "vitest";
import { diffSpans, editCost } from "../src/diff.js";

function rebuild(spans: ReturnType<typeof diffSpans>) {
  return {
    ref: spans.map((s) => s.ref).join(""),
    out: spans.map((s) => s.out).join(""),
  };
}

describe("diffSpans", () => {
  it("marks kitten/sitting with cost 3", () => {
    const spans = diffSpans("kitten", "sitting");
    expect(editCost(spans)).toBe(3);
    expect(rebuild(spans)).toEqual({ ref: "kitten", out: "sitting" });
  });

  it("equal strings produce one equal span", () => {
    const spans = diffSpans("same", "same");
    expect(spans).toEqual([{ kind: "equal", ref: "same", out: "same" }]);
    expect(editCost(spans)).toBe(0);
  });

  it("pure insertion and pure deletion", () => {
    expect(diffSpans("", "abc")).toEqual([{ kind: "ins", ref: "", out: "abc" }]);
    expect(diffSpans("abc", "")).toEqual([{ kind: "del", ref: "abc", out: "" }]);
  });

  it("substitution in the middle", () => {
    const spans = diffSpans("abXcd", "abYcd");
    expect(spans).toEqual([
      { kind: "equal", ref: "ab", out: "ab" },
      { kind: "sub", ref: "X", out: "Y" },
      { kind: "equal", ref: "cd", out: "cd" },
    ]);
  });

  it("always reconstructs both strings in logical order", () => {
    const cases: Array<[string, string]> = [
      ["handwriting", "handwritten"],
      ["a", "bbbb"],
      ["مرحبا", "مرحب"],
      ["mixéd", "mixed"],
    ];
    for (const [a, b] of cases) {
      expect(rebuild(diffSpans(a, b))).toEqual({ ref: a, out: b });
    }
  });

  it("counts code points, not UTF-16 units", () => {
    // astral-plane character: one substitution, not two
    const spans = diffSpans("a\u{1d49e}b", "axb");
    expect(editCost(spans)).toBe(1);
  });
});
