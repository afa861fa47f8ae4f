/**
 * Client session state. Nothing here is authoritative: category totals and
 * the pending queue are re-read from the server after every acknowledged
 * verdict, and a page refresh rebuilds the identical view from the API.
 */
import { ApiError, ReviewClient } from "./api.js";
import type {
  Action,
  Category,
  CategoryReport,
  SampleBundle,
  VerdictPayload,
} from "./types.js";
import { CATEGORIES, isDone } from "./types.js";

export interface Draft {
  category: Category | null;
  action: Action | null;
  correctedText: string;
  rotate180: boolean;
  cropY0: string;
  cropY1: string;
}

export function emptyDraft(): Draft {
  return {
    category: null,
    action: null,
    correctedText: "",
    rotate180: false,
    cropY0: "",
    cropY1: "",
  };
}

/** Default action a category pre-selects; every one except
 * valid_but_hard can be overridden before submitting. */
export const DEFAULT_ACTION: Record<Category, Action> = {
  transcription: "relabel",
  segmentation: "remove",
  orientation: "fix_image",
  script_mismatch: "remove",
  irrelevant: "remove",
  valid_but_hard: "keep",
};

interface HistoryEntry {
  bundle: SampleBundle;
  payload: VerdictPayload;
}

export class SessionState {
  current: SampleBundle | null = null;
  done = false;
  report: CategoryReport | null = null;
  pendingCers: number[] = [];
  draft: Draft = emptyDraft();
  /** submitted this visit, newest last; Z walks back through it */
  history: HistoryEntry[] = [];
  revisiting = false;
  offline = false;
  inlineError: string | null = null;
  onChange: () => void = () => {};

  constructor(
    readonly client: ReviewClient,
    readonly tau: number,
    readonly reviewer: string = "ui",
  ) {
    client.onOffline = (down) => {
      this.offline = down;
      this.onChange();
    };
  }

  async load(): Promise<void> {
    const [next, report, pending] = await Promise.all([
      this.client.next(),
      this.client.report(),
      this.client.samples("pending"),
    ]);
    this.report = report;
    this.pendingCers = pending.items.map((s) => s.cer);
    if (isDone(next)) {
      this.done = true;
      this.current = null;
    } else {
      this.done = false;
      this.current = next;
    }
    this.draft = emptyDraft();
    this.revisiting = false;
    this.inlineError = null;
    this.onChange();
  }

  setCategory(index1: number): void {
    const cat = CATEGORIES[index1 - 1];
    if (!cat || !this.current) return;
    this.draft.category = cat;
    this.draft.action = DEFAULT_ACTION[cat];
    if (cat === "orientation") this.draft.rotate180 = true;
    this.inlineError = null;
    this.onChange();
  }

  setAction(action: Action): void {
    if (!this.current || !this.draft.category) return;
    if (this.draft.category === "valid_but_hard" && action !== "keep") return;
    this.draft.action = action;
    this.inlineError = null;
    this.onChange();
  }

  setCorrectedText(text: string): void {
    this.draft.correctedText = text;
    this.onChange();
  }

  toggleRotate(): void {
    this.draft.rotate180 = !this.draft.rotate180;
    this.onChange();
  }

  setCropBand(y0: string, y1: string): void {
    this.draft.cropY0 = y0;
    this.draft.cropY1 = y1;
    this.onChange();
  }

  /**
   * Mirror of the server's verdict invariants. Returns the reason the
   * draft cannot be submitted, or null when it can. Anything blocked here
   * would be a 400 from the server; nothing passable here relies on
   * client-only rules.
   */
  blockedReason(): string | null {
    const d = this.draft;
    if (!this.current) return "no sample loaded";
    if (!d.category) return "pick a category (1-6)";
    if (!d.action) return "pick an action";
    if (d.category === "valid_but_hard" && d.action !== "keep") {
      return "valid_but_hard samples are always kept";
    }
    if (d.action === "relabel" && d.correctedText.trim() === "") {
      return "relabel needs corrected text";
    }
    if (d.action === "fix_image" && !d.rotate180) {
      const y0 = Number(d.cropY0);
      const y1 = Number(d.cropY1);
      if (!(Number.isFinite(y0) && Number.isFinite(y1) && y0 >= 0 && y1 > y0)) {
        return "fix_image needs rotate-180 or a crop band y0 < y1";
      }
    }
    return null;
  }

  buildPayload(): VerdictPayload {
    const d = this.draft;
    if (!this.current || !d.category || !d.action) {
      throw new Error("draft incomplete");
    }
    const payload: VerdictPayload = {
      sample_id: this.current.sample_id,
      category: d.category,
      action: d.action,
      reviewer: this.reviewer,
    };
    if (d.action === "relabel") payload.corrected_text = d.correctedText.trim();
    if (d.action === "fix_image") {
      payload.fix = d.rotate180
        ? { type: "rotate180" }
        : { type: "crop_band", y0: Number(d.cropY0), y1: Number(d.cropY1) };
    }
    return payload;
  }

  async submit(): Promise<boolean> {
    const blocked = this.blockedReason();
    if (blocked) {
      this.inlineError = blocked;
      this.onChange();
      return false;
    }
    const bundle = this.current!;
    const payload = this.buildPayload();
    try {
      await this.client.submitVerdict(payload);
    } catch (err) {
      if (err instanceof ApiError) {
        this.inlineError = err.detail;
        this.onChange();
        return false;
      }
      throw err;
    }
    this.history.push({ bundle, payload });
    await this.load();
    return true;
  }

  /** Step back to the most recently reviewed sample to change its verdict. */
  undoLast(): void {
    const last = this.history.pop();
    if (!last) return;
    this.current = last.bundle;
    this.done = false;
    this.revisiting = true;
    this.draft = emptyDraft();
    this.inlineError = null;
    this.onChange();
  }
}
