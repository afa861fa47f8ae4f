// @vitest-environment jsdom
import { describe, expect, it } from "vitest";
import { histogramBuckets, renderDiffRows } from "../src/render.js";

describe("histogramBuckets", () => {
  it("covers [tau, max cer] with contiguous buckets and counts everything", () => {
    const cers = [0.26, 0.3, 0.3, 0.55, 0.9];
    const buckets = histogramBuckets(cers, 0.25, 8);
    expect(buckets).toHaveLength(8);
    expect(buckets[0].lo).toBeCloseTo(0.25, 12);
    expect(buckets[buckets.length - 1].hi).toBeCloseTo(0.9, 12);
    for (let i = 1; i < buckets.length; i++) {
      expect(buckets[i].lo).toBeCloseTo(buckets[i - 1].hi, 12);
    }
    expect(buckets.reduce((acc, b) => acc + b.count, 0)).toBe(cers.length);
    // the max lands in the last bucket, not off the end
    expect(buckets[buckets.length - 1].count).toBeGreaterThanOrEqual(1);
  });

  it("degenerates gracefully when the queue is empty", () => {
    const buckets = histogramBuckets([], 0.25, 4);
    expect(buckets).toHaveLength(4);
    expect(buckets.every((b) => b.count === 0)).toBe(true);
    expect(buckets[0].lo).toBeCloseTo(0.25, 9);
  });
});

describe("renderDiffRows", () => {
  it("shows the label with deletions and the prediction with insertions", () => {
    const rows = renderDiffRows("kitten", "sitting");
    const label = rows.querySelector(".diff-label .diff-text")!;
    const pred = rows.querySelector(".diff-prediction .diff-text")!;
    expect(label.textContent).toBe("kitten");
    expect(pred.textContent).toBe("sitting");
    expect(label.querySelectorAll(".mark-sub").length).toBeGreaterThan(0);
    expect(pred.querySelectorAll(".mark-ins").length).toBeGreaterThan(0);
    // insertions do not appear in the label row
    expect(label.querySelectorAll(".piece-ins")).toHaveLength(0);
  });

  it("keeps RTL text in logical order with dir=auto", () => {
    const label = "مرحبا بك";
    const pred = "مرحب بك";
    const rows = renderDiffRows(label, pred);
    const labelText = rows.querySelector(".diff-label .diff-text")!;
    const predText = rows.querySelector(".diff-prediction .diff-text")!;
    // concatenated spans reproduce the logical code-point order exactly:
    // the bidi algorithm handles display order, the DOM never reorders
    expect(labelText.textContent).toBe(label);
    expect(predText.textContent).toBe(pred);
    expect(labelText.getAttribute("dir")).toBe("auto");
    expect(predText.getAttribute("dir")).toBe("auto");
  });

  it("snapshot of a mixed-direction diff", () => {
    const rows = renderDiffRows("id42 שלום", "id42 שלו");
    expect(rows.outerHTML).toMatchSnapshot();
  });
});
