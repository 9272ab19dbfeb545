/** Pure application state and its reducer.
 *
 * Nothing authoritative lives here: the server is the source of truth and
 * every field below is reconstructable from it plus the retry queue of
 * not-yet-acknowledged submissions.
 */

import type { DecisionSubmission, PairView, Summary } from "./types.js";

export type Phase = "loading" | "reviewing" | "done" | "error";

export type HistoryStatus = "pending" | "acked" | "superseded" | "rejected";

export interface HistoryEntry {
  pair_id: string;
  decision: string;
  reviewer: string;
  decided_at: string | null;
  status: HistoryStatus;
}

export interface AppState {
  phase: Phase;
  pair: PairView | null;
  remaining: number;
  summary: Summary | null;
  retryQueue: readonly DecisionSubmission[];
  banner: string | null;
  history: readonly HistoryEntry[];
}

export const initialState: AppState = {
  phase: "loading",
  pair: null,
  remaining: 0,
  summary: null,
  retryQueue: [],
  banner: null,
  history: [],
};

export type AppEvent =
  | { kind: "next-loaded"; pair: PairView | null; remaining: number }
  | { kind: "summary-loaded"; summary: Summary }
  | { kind: "submitted"; submission: DecisionSubmission }
  | { kind: "acked"; submission: DecisionSubmission; decidedAt: string }
  | { kind: "submit-failed"; submission: DecisionSubmission; message: string }
  | { kind: "submit-rejected"; submission: DecisionSubmission; message: string }
  | { kind: "service-unreachable"; message: string }
  | { kind: "reconnecting" };

/** Pair ids this session has decided, acknowledged or not. */
export function locallyDecided(state: AppState): Set<string> {
  const ids = new Set<string>();
  for (const entry of state.history) {
    if (entry.status !== "rejected") {
      ids.add(entry.pair_id);
    }
  }
  return ids;
}

export function reduce(state: AppState, event: AppEvent): AppState {
  switch (event.kind) {
    case "next-loaded": {
      if (event.pair === null) {
        return { ...state, phase: "done", pair: null, remaining: 0 };
      }
      return { ...state, phase: "reviewing", pair: event.pair,
               remaining: event.remaining };
    }
    case "summary-loaded":
      return { ...state, summary: event.summary };
    case "submitted": {
      const entry: HistoryEntry = {
        pair_id: event.submission.pair_id,
        decision: event.submission.decision,
        reviewer: event.submission.reviewer,
        decided_at: null,
        status: "pending",
      };
      // an older decision for the same pair is now superseded; a fresh
      // action also clears any stale notice
      const history = state.history.map((h) =>
        h.pair_id === entry.pair_id && h.status !== "rejected"
          ? { ...h, status: "superseded" as HistoryStatus }
          : h);
      return { ...state, history: [...history, entry], banner: null };
    }
    case "acked": {
      const history = state.history.map((h) =>
        h.pair_id === event.submission.pair_id && h.status === "pending" &&
        h.decision === event.submission.decision
          ? { ...h, status: "acked" as HistoryStatus, decided_at: event.decidedAt }
          : h);
      const retryQueue = state.retryQueue.filter((s) => s !== event.submission);
      return { ...state, history, retryQueue };
    }
    case "submit-failed": {
      const queued = state.retryQueue.includes(event.submission)
        ? state.retryQueue
        : [...state.retryQueue, event.submission];
      return { ...state, retryQueue: queued };
    }
    case "submit-rejected": {
      const history = state.history.map((h) =>
        h.pair_id === event.submission.pair_id && h.status === "pending"
          ? { ...h, status: "rejected" as HistoryStatus }
          : h);
      const retryQueue = state.retryQueue.filter((s) => s !== event.submission);
      return { ...state, history, retryQueue,
               banner: `server rejected decision for ${event.submission.pair_id}: ${event.message}` };
    }
    case "service-unreachable":
      return { ...state, phase: "error", banner: event.message };
    case "reconnecting":
      return { ...state, phase: "loading", banner: null };
  }
}
