/** Wires the API client, reducer, and renderer together.
 *
 * Decisions advance the reviewer immediately; the POST settles in the
 * background and lands in the retry queue on network failure, so a flaky
 * connection never stalls the flow or loses input.
 */

import { ApiClient, ApiError } from "./api.js";
import { render } from "./render.js";
import type { AppEvent, AppState } from "./state.js";
import { initialState, locallyDecided, reduce } from "./state.js";
import type { Decision, DecisionSubmission } from "./types.js";
import { isDecision } from "./types.js";

const KEY_TO_DECISION: Record<string, Decision> = {
  m: "match",
  n: "nonmatch",
  u: "undetermined",
};

export class Controller {
  state: AppState = initialState;
  /** Settles when the most recent keyboard-initiated action finishes. */
  lastAction: Promise<void> = Promise.resolve();

  constructor(private readonly api: ApiClient,
              private readonly root: HTMLElement,
              private readonly reviewer = "anonymous") {}

  apply(event: AppEvent): void {
    this.state = reduce(this.state, event);
    this.draw();
  }

  draw(): void {
    render(this.root, this.state, {
      decide: (decision) => { this.lastAction = this.decide(decision); },
      retry: () => { this.lastAction = this.start(); },
    });
  }

  async start(): Promise<void> {
    this.apply({ kind: "reconnecting" });
    try {
      await this.refreshSummary();
      await this.refreshNext();
    } catch (error) {
      this.apply({ kind: "service-unreachable", message: describe(error) });
    }
  }

  async refreshSummary(): Promise<void> {
    this.apply({ kind: "summary-loaded", summary: await this.api.summary() });
  }

  /** Load the next pair, skipping anything this session already decided
   * but the server has not yet acknowledged. */
  async refreshNext(): Promise<void> {
    const next = await this.api.next();
    const decided = locallyDecided(this.state);
    if (next.pair === null || !decided.has(next.pair.pair_id)) {
      this.apply({ kind: "next-loaded", pair: next.pair, remaining: next.remaining });
      return;
    }
    const pending = await this.api.listPairs("pending");
    const candidate = pending.find((p) => !decided.has(p.pair_id)) ?? null;
    this.apply({ kind: "next-loaded", pair: candidate,
                 remaining: pending.filter((p) => !decided.has(p.pair_id)).length });
  }

  async decide(decision: Decision): Promise<void> {
    if (this.state.phase !== "reviewing" || this.state.pair === null) {
      return;
    }
    const submission: DecisionSubmission = {
      pair_id: this.state.pair.pair_id,
      decision,
      reviewer: this.reviewer,
    };
    this.apply({ kind: "submitted", submission });
    const delivery = this.deliver(submission);
    try {
      await this.refreshNext();
    } catch (error) {
      this.apply({ kind: "service-unreachable", message: describe(error) });
    }
    await delivery;
  }

  private async deliver(submission: DecisionSubmission): Promise<void> {
    try {
      const ack = await this.api.submit(submission);
      this.apply({ kind: "acked", submission, decidedAt: ack.decided_at });
      await this.refreshSummary();
    } catch (error) {
      if (error instanceof ApiError && error.status >= 400 && error.status < 500) {
        this.apply({ kind: "submit-rejected", submission, message: error.message });
      } else {
        this.apply({ kind: "submit-failed", submission, message: describe(error) });
      }
    }
  }

  /** Retry queued submissions in order; called on an interval in the app. */
  async flushRetries(): Promise<void> {
    for (const submission of [...this.state.retryQueue]) {
      try {
        const ack = await this.api.submit(submission);
        this.apply({ kind: "acked", submission, decidedAt: ack.decided_at });
      } catch (error) {
        if (error instanceof ApiError && error.status >= 400 && error.status < 500) {
          this.apply({ kind: "submit-rejected", submission, message: error.message });
        }
        // still unreachable: keep it queued for the next sweep
      }
    }
    if (this.state.retryQueue.length === 0 && this.state.history.length > 0) {
      try {
        await this.refreshSummary();
      } catch {
        // summary refresh is best-effort here
      }
    }
  }

  bindKeyboard(target: Pick<Document, "addEventListener">): void {
    target.addEventListener("keydown", (event) => {
      const key = (event as KeyboardEvent).key.toLowerCase();
      const decision = KEY_TO_DECISION[key];
      if (decision !== undefined && isDecision(decision)) {
        this.lastAction = this.decide(decision);
      }
    });
  }
}

function describe(error: unknown): string {
  if (error instanceof Error) {
    return error.message;
  }
  return String(error);
}
