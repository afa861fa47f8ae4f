/**
 * REST client for the review service. The server is the single source of
 * truth; this layer adds exactly one behavior of its own: verdicts that
 * fail with a network error are queued and retried with identical payloads
 * (the server deduplicates by content, so retries are safe).
 */
import type {
  CategoryReport,
  NextResponse,
  SampleListing,
  SubmitResult,
  VerdictPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export interface PendingSubmission {
  payload: VerdictPayload;
  resolve: (r: SubmitResult) => void;
  reject: (e: ApiError) => void;
}

export class ReviewClient {
  private queue: PendingSubmission[] = [];
  private flushing = false;
  onOffline: (down: boolean) => void = () => {};

  constructor(
    readonly base: string,
    readonly sessionId: string,
    private retryDelayMs = 2000,
  ) {}

  static async createSession(
    base: string,
    manifest: string,
    scores: string,
    tau: number,
  ): Promise<{ session_id: string; pending: number }> {
    return request(`${base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ manifest, scores, tau }),
    });
  }

  next(): Promise<NextResponse> {
    return request(`${this.base}/sessions/${this.sessionId}/next`);
  }

  report(): Promise<CategoryReport> {
    return request(`${this.base}/sessions/${this.sessionId}/report`);
  }

  samples(status: "pending" | "done", limit = 500): Promise<SampleListing> {
    return request(
      `${this.base}/sessions/${this.sessionId}/samples?status=${status}&limit=${limit}`,
    );
  }

  cleanedManifest(allowPartial: boolean, out?: string): Promise<{ manifest: string }> {
    return request(`${this.base}/sessions/${this.sessionId}/cleaned-manifest`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ allow_partial: allowPartial, ...(out ? { out } : {}) }),
    });
  }

  imageUrl(sampleId: string, corrected = false): string {
    return `${this.base}/images/${sampleId}${corrected ? "?corrected=1" : ""}`;
  }

  /**
   * Submit a verdict. Validation failures (4xx) reject immediately; network
   * failures park the submission in the retry queue and the promise settles
   * once the server finally acknowledges it.
   */
  submitVerdict(payload: VerdictPayload): Promise<SubmitResult> {
    return new Promise((resolve, reject) => {
      this.queue.push({ payload, resolve, reject });
      void this.flush();
    });
  }

  get queuedCount(): number {
    return this.queue.length;
  }

  private async flush(): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    while (this.queue.length > 0) {
      const head = this.queue[0];
      try {
        const result = await request<SubmitResult>(
          `${this.base}/sessions/${this.sessionId}/verdicts`,
          {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(head.payload),
          },
        );
        this.queue.shift();
        this.onOffline(false);
        head.resolve(result);
      } catch (err) {
        if (err instanceof ApiError) {
          // the server saw it and said no; retrying would not change that
          this.queue.shift();
          head.reject(err);
          continue;
        }
        this.onOffline(true);
        await new Promise((r) => setTimeout(r, this.retryDelayMs));
      }
    }
    this.flushing = false;
  }
}
