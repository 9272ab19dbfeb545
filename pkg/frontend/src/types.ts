/** Wire types, mirroring the JSON the review service serves. */

export type Decision = "match" | "nonmatch" | "undetermined";

export const DECISIONS: readonly Decision[] = ["match", "nonmatch", "undetermined"];

export function isDecision(value: string): value is Decision {
  return (DECISIONS as readonly string[]).includes(value);
}

/** One side of a candidate pair; missing fields arrive as empty strings. */
export interface SideFields {
  record_id: string;
  city: string;
  zip: string;
  event_date: string;
  days_since_start: string;
  num_killed: string;
}

export const SIDE_FIELD_ORDER: readonly (keyof SideFields)[] = [
  "record_id", "city", "zip", "event_date", "days_since_start", "num_killed",
];

export interface PairView {
  pair_id: string;
  state: string;
  xi: number;
  pattern: string;
  a: SideFields;
  b: SideFields;
  decision: Decision | null;
  reviewer: string | null;
  decided_at: string | null;
}

export interface Summary {
  total: number;
  decided: number;
  pending: number;
  counts: Record<Decision, number>;
  percent: Record<Decision, string> | null;
  review_precision: number | null;
  review_precision_display: string | null;
}

export interface NextResponse {
  pair: PairView | null;
  remaining: number;
}

export interface DecisionSubmission {
  pair_id: string;
  decision: Decision;
  reviewer: string;
}

export interface DecisionAck {
  ok: boolean;
  pair_id: string;
  decision: Decision;
  reviewer: string;
  decided_at: string;
}
