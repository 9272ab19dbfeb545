/** Display formatting shared by the card and the dashboard. */

/** Posterior probabilities are always shown to exactly three decimals. */
export function formatXi(xi: number): string {
  return xi.toFixed(3);
}

/**
 * Percent string with the fractional digits truncated, never rounded,
 * matching the convention the service uses in /api/summary. Built with
 * integer arithmetic so 849/942 renders "90.12%" at two digits.
 */
export function truncatedPercent(count: number, total: number, digits = 1): string {
  if (total <= 0 || !Number.isFinite(total)) {
    throw new Error(`total must be a positive number, got ${total}`);
  }
  const scale = 10 ** digits;
  const scaled = Math.floor((count * 100 * scale) / total);
  if (digits === 0) {
    return `${scaled}%`;
  }
  const whole = Math.floor(scaled / scale);
  const frac = String(scaled % scale).padStart(digits, "0");
  return `${whole}.${frac}%`;
}

export interface FieldDisplay {
  text: string;
  missing: boolean;
}

/** Missing values must be visibly marked, never shown as a blank cell. */
export function formatField(value: string): FieldDisplay {
  if (value === "") {
    return { text: "missing", missing: true };
  }
  return { text: value, missing: false };
}

export interface PatternChip {
  text: string;
  missing: boolean;
}

/** Agreement pattern "2 1 -1 1" -> chips, with -1 rendered as "?". */
export function patternChips(pattern: string): PatternChip[] {
  if (pattern.trim() === "") {
    return [];
  }
  return pattern.trim().split(/\s+/).map((token) =>
    token === "-1" ? { text: "?", missing: true } : { text: token, missing: false });
}
