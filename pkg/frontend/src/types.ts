export const CATEGORIES = [
  "transcription",
  "segmentation",
  "orientation",
  "script_mismatch",
  "irrelevant",
  "valid_but_hard",
] as const;

export type Category = (typeof CATEGORIES)[number];

export const ACTIONS = ["relabel", "fix_image", "remove", "keep"] as const;
export type Action = (typeof ACTIONS)[number];

export interface SampleBundle {
  sample_id: string;
  label: string;
  prediction: string;
  cer: number;
  rank: number;
  split: string;
  image: string;
  remaining: number;
}

export interface SessionDone {
  done: true;
  remaining: 0;
}

export type NextResponse = SampleBundle | SessionDone;

export function isDone(r: NextResponse): r is SessionDone {
  return (r as SessionDone).done === true;
}

export type FixTool =
  | { type: "rotate180" }
  | { type: "crop_band"; y0: number; y1: number };

export interface VerdictPayload {
  sample_id: string;
  category: Category;
  action: Action;
  corrected_text?: string;
  reviewer?: string;
  fix?: FixTool;
}

export interface SubmitResult {
  accepted: boolean;
  duplicate: boolean;
  remaining: number;
}

export interface CategoryReport {
  splits: Record<string, Record<string, number>>;
  totals: Record<string, number>;
  reviewed: number;
  pending: number;
  precision: number | null;
  table: string;
}

export interface SampleListing {
  total: number;
  offset: number;
  items: Array<SampleBundle & { verdict?: { category: Category; action: Action } }>;
}
