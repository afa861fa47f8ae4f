/**
 * Character-level edit script between the ground-truth label and the model
 * prediction, with the same operation semantics as the server's metric:
 * unit-cost substitute/delete/insert over Unicode code points.
 */

export type OpKind = "equal" | "sub" | "del" | "ins";

export interface DiffSpan {
  kind: OpKind;
  /** text drawn from the label for equal/sub/del, empty for ins */
  ref: string;
  /** text drawn from the prediction for equal/sub/ins, empty for del */
  out: string;
}

/** Edit distance implied by a span list (counts sub + del + ins chars). */
export function editCost(spans: DiffSpan[]): number {
  let cost = 0;
  for (const s of spans) {
    if (s.kind === "sub") cost += [...s.ref].length;
    else if (s.kind === "del") cost += [...s.ref].length;
    else if (s.kind === "ins") cost += [...s.out].length;
  }
  return cost;
}

/**
 * Full DP with backtrace. Code-point arrays so astral characters count as
 * one edit, matching the server. Backtrace prefers diagonal, then delete,
 * then insert; equal-cost scripts differ only in presentation.
 */
export function diffSpans(label: string, prediction: string): DiffSpan[] {
  const a = [...label];
  const b = [...prediction];
  const n = a.length;
  const m = b.length;
  const width = m + 1;
  const d = new Int32Array((n + 1) * width);
  for (let j = 0; j <= m; j++) d[j] = j;
  for (let i = 1; i <= n; i++) {
    d[i * width] = i;
    for (let j = 1; j <= m; j++) {
      const subCost = d[(i - 1) * width + j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1);
      const delCost = d[(i - 1) * width + j] + 1;
      const insCost = d[i * width + j - 1] + 1;
      d[i * width + j] = Math.min(subCost, delCost, insCost);
    }
  }

  const ops: Array<{ kind: OpKind; ref: string; out: string }> = [];
  let i = n;
  let j = m;
  while (i > 0 || j > 0) {
    const here = d[i * width + j];
    if (i > 0 && j > 0 && here === d[(i - 1) * width + j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1)) {
      ops.push({
        kind: a[i - 1] === b[j - 1] ? "equal" : "sub",
        ref: a[i - 1],
        out: b[j - 1],
      });
      i--;
      j--;
    } else if (i > 0 && here === d[(i - 1) * width + j] + 1) {
      ops.push({ kind: "del", ref: a[i - 1], out: "" });
      i--;
    } else {
      ops.push({ kind: "ins", ref: "", out: b[j - 1] });
      j--;
    }
  }
  ops.reverse();

  // merge runs of the same kind into spans
  const spans: DiffSpan[] = [];
  for (const op of ops) {
    const last = spans[spans.length - 1];
    if (last && last.kind === op.kind) {
      last.ref += op.ref;
      last.out += op.out;
    } else {
      spans.push({ ...op });
    }
  }
  return spans;
}
