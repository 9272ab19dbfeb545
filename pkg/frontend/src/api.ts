/** Typed client for the review service HTTP endpoints. */

import type {
  DecisionAck,
  DecisionSubmission,
  NextResponse,
  PairView,
  Summary,
} from "./types.js";

/** Structural subset of fetch so tests can inject an in-memory transport. */
export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}

export type FetchFn = (input: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<ResponseLike>;

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private readonly fetchFn: FetchFn, private readonly base = "") {}

  async summary(): Promise<Summary> {
    return await this.request<Summary>("/api/summary");
  }

  async next(): Promise<NextResponse> {
    return await this.request<NextResponse>("/api/pairs/next");
  }

  async getPair(pairId: string): Promise<PairView> {
    return await this.request<PairView>(`/api/pairs/${encodeURIComponent(pairId)}`);
  }

  async listPairs(status: "all" | "pending" | "decided", limit = 10000): Promise<PairView[]> {
    const body = await this.request<{ pairs: PairView[] }>(
      `/api/pairs?status=${status}&limit=${limit}`);
    return body.pairs;
  }

  async submit(submission: DecisionSubmission): Promise<DecisionAck> {
    return await this.request<DecisionAck>(
      `/api/pairs/${encodeURIComponent(submission.pair_id)}/decision`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          decision: submission.decision,
          reviewer: submission.reviewer,
        }),
      });
  }

  private async request<T>(path: string, init?: Parameters<FetchFn>[1]): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body && typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}
