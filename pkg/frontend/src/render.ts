/** DOM view. Rebuilt from SessionState on every change; holds no state of
 * its own beyond the relabel buffer's focus. */
import { diffSpans } from "./diff.js";
import type { DiffSpan } from "./diff.js";
import type { SessionState } from "./state.js";
import type { Action } from "./types.js";
import { CATEGORIES } from "./types.js";

const ACTION_KEYS: Array<[Action, string]> = [
  ["relabel", "R"],
  ["fix_image", "F"],
  ["remove", "X"],
  ["keep", "K"],
];

export interface Bucket {
  lo: number;
  hi: number;
  count: number;
}

/** Fixed-width buckets covering [tau, max cer] inclusive. */
export function histogramBuckets(cers: number[], tau: number, n = 8): Bucket[] {
  const hi = Math.max(tau + 1e-9, ...cers);
  const width = (hi - tau) / n;
  const buckets: Bucket[] = [];
  for (let i = 0; i < n; i++) {
    buckets.push({ lo: tau + i * width, hi: tau + (i + 1) * width, count: 0 });
  }
  for (const c of cers) {
    let idx = Math.floor((c - tau) / width);
    if (idx >= n) idx = n - 1;
    if (idx < 0) idx = 0;
    buckets[idx].count += 1;
  }
  return buckets;
}

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Two aligned text rows: the stored label (deletions and substitutions
 * marked) and the model prediction (insertions and substitutions marked).
 * dir="auto" keeps RTL scripts in logical order; spans never reorder
 * characters themselves.
 */
export function renderDiffRows(label: string, prediction: string): HTMLElement {
  const spans = diffSpans(label, prediction);
  const wrap = el("div", "diff");
  wrap.appendChild(textRow("label", spans, (s) => s.ref, ["del", "sub"]));
  wrap.appendChild(textRow("prediction", spans, (s) => s.out, ["ins", "sub"]));
  return wrap;
}

function textRow(
  name: string,
  spans: DiffSpan[],
  pick: (s: DiffSpan) => string,
  marked: string[],
): HTMLElement {
  const row = el("div", `diff-row diff-${name}`);
  row.appendChild(el("span", "diff-tag", name));
  const text = el("span", "diff-text");
  text.setAttribute("dir", "auto");
  for (const span of spans) {
    const piece = pick(span);
    if (piece === "") continue;
    const mark = marked.includes(span.kind) ? ` mark-${span.kind}` : "";
    text.appendChild(el("span", `piece piece-${span.kind}${mark}`, piece));
  }
  row.appendChild(text);
  return row;
}

function categoryBar(state: SessionState): HTMLElement {
  const bar = el("div", "categories");
  CATEGORIES.forEach((cat, i) => {
    const btn = el("button", "cat-btn", `${i + 1} ${cat}`) as HTMLButtonElement;
    if (state.draft.category === cat) btn.classList.add("selected");
    btn.onclick = () => state.setCategory(i + 1);
    bar.appendChild(btn);
  });
  return bar;
}

function actionBar(state: SessionState): HTMLElement {
  const bar = el("div", "actions");
  for (const [action, key] of ACTION_KEYS) {
    const btn = el("button", "act-btn", `${key} ${action}`) as HTMLButtonElement;
    if (state.draft.action === action) btn.classList.add("selected");
    const forced =
      state.draft.category === "valid_but_hard" && action !== "keep";
    btn.disabled = forced;
    btn.onclick = () => state.setAction(action);
    bar.appendChild(btn);
  }
  return bar;
}

function fixControls(state: SessionState): HTMLElement {
  const box = el("div", "fix-controls");
  const rotate = el("label", "fix-rotate");
  const check = el("input") as HTMLInputElement;
  check.type = "checkbox";
  check.checked = state.draft.rotate180;
  check.onchange = () => state.toggleRotate();
  rotate.appendChild(check);
  rotate.appendChild(document.createTextNode(" rotate 180"));
  box.appendChild(rotate);

  const band = el("span", "fix-band");
  const y0 = el("input", "crop-y0") as HTMLInputElement;
  const y1 = el("input", "crop-y1") as HTMLInputElement;
  for (const [input, value] of [
    [y0, state.draft.cropY0],
    [y1, state.draft.cropY1],
  ] as const) {
    input.type = "number";
    input.value = value;
    input.oninput = () => state.setCropBand(y0.value, y1.value);
  }
  band.appendChild(document.createTextNode("crop band "));
  band.appendChild(y0);
  band.appendChild(document.createTextNode(" to "));
  band.appendChild(y1);
  box.appendChild(band);
  return box;
}

function relabelBox(state: SessionState): HTMLElement {
  const box = el("div", "relabel-box");
  const input = el("input", "relabel-input") as HTMLInputElement;
  input.type = "text";
  input.setAttribute("dir", "auto");
  input.placeholder = "corrected text";
  input.value = state.draft.correctedText;
  input.oninput = () => {
    state.setCorrectedText(input.value);
  };
  box.appendChild(input);
  return box;
}

function sampleView(state: SessionState): HTMLElement {
  const s = state.current!;
  const view = el("div", "sample");
  const head = el(
    "div",
    "sample-head",
    `${s.sample_id}  rank ${s.rank}  cer ${s.cer.toFixed(3)}  ` +
      `split ${s.split}  remaining ${s.remaining}` +
      (state.revisiting ? "  (revisiting)" : ""),
  );
  view.appendChild(head);

  const img = el("img", "sample-image") as HTMLImageElement;
  img.src = state.client.imageUrl(
    s.sample_id,
    state.draft.action === "fix_image",
  );
  img.alt = s.sample_id;
  view.appendChild(img);
  view.appendChild(renderDiffRows(s.label, s.prediction));
  view.appendChild(categoryBar(state));
  if (state.draft.category) {
    view.appendChild(actionBar(state));
    if (state.draft.action === "relabel") view.appendChild(relabelBox(state));
    if (state.draft.action === "fix_image") view.appendChild(fixControls(state));
  }

  const submit = el("button", "submit-btn") as HTMLButtonElement;
  const blocked = state.blockedReason();
  submit.disabled = blocked !== null;
  submit.textContent = blocked ? `blocked: ${blocked}` : "submit (Enter)";
  submit.onclick = () => void state.submit();
  view.appendChild(submit);

  if (state.inlineError) {
    view.appendChild(el("div", "inline-error", state.inlineError));
  }
  return view;
}

function dashboard(state: SessionState): HTMLElement {
  const r = state.report!;
  const dash = el("div", "dashboard");
  dash.appendChild(
    el(
      "div",
      "progress",
      `reviewed ${r.reviewed} / ${r.reviewed + r.pending}` +
        (r.precision === null ? "" : `  precision ${r.precision.toFixed(3)}`),
    ),
  );
  const counts = el("div", "category-counts");
  for (const cat of CATEGORIES) {
    counts.appendChild(
      el("span", `count count-${cat}`, `${cat}: ${r.totals[cat] ?? 0}`),
    );
  }
  dash.appendChild(counts);

  const hist = el("div", "histogram");
  const buckets = histogramBuckets(state.pendingCers, state.tau);
  const peak = Math.max(1, ...buckets.map((b) => b.count));
  for (const b of buckets) {
    const bar = el("div", "hist-bar");
    bar.style.height = `${(b.count / peak) * 48 + 2}px`;
    bar.title = `cer ${b.lo.toFixed(3)}-${b.hi.toFixed(3)}: ${b.count}`;
    hist.appendChild(bar);
  }
  const first = buckets[0];
  const last = buckets[buckets.length - 1];
  hist.appendChild(
    el("span", "hist-range", `${first.lo.toFixed(2)} .. ${last.hi.toFixed(2)}`),
  );
  dash.appendChild(hist);
  return dash;
}

function completion(state: SessionState): HTMLElement {
  const r = state.report!;
  const view = el("div", "completion");
  view.appendChild(el("h2", undefined, "queue complete"));
  view.appendChild(el("pre", "report-table", r.table));
  return view;
}

export function render(state: SessionState, root: HTMLElement): void {
  const focused = document.activeElement as HTMLElement | null;
  const keepFocus = focused?.className ?? null;
  root.textContent = "";

  if (state.offline) {
    root.appendChild(
      el(
        "div",
        "offline-banner",
        `connection lost; ${state.client.queuedCount} verdict(s) queued for retry`,
      ),
    );
  }
  if (!state.report) {
    root.appendChild(el("div", "loading", "loading session..."));
    return;
  }
  if (state.current) {
    root.appendChild(sampleView(state));
  } else if (state.done) {
    root.appendChild(completion(state));
  }
  root.appendChild(dashboard(state));

  if (keepFocus) {
    const again = root.querySelector(`.${keepFocus.split(" ")[0]}`);
    if (again instanceof HTMLElement) again.focus();
  }
}
