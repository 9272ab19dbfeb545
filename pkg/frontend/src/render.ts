/** DOM rendering. The whole view is rebuilt from state on every change;
 * at review-queue sizes that is far cheaper than it needs to be. All data
 * lands via textContent, never markup.
 */

import { formatField, formatXi, patternChips, truncatedPercent } from "./format.js";
import type { AppState } from "./state.js";
import type { Decision, PairView, Summary } from "./types.js";
import { DECISIONS, SIDE_FIELD_ORDER } from "./types.js";

export interface Handlers {
  decide(decision: Decision): void;
  retry(): void;
}

const SHORTCUTS: Record<Decision, string> = {
  match: "m",
  nonmatch: "n",
  undetermined: "u",
};

function el(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function render(root: HTMLElement, state: AppState, handlers: Handlers): void {
  root.textContent = "";
  root.appendChild(renderHeader(state));
  if (state.banner) {
    root.appendChild(el("div", { class: "banner", role: "alert" }, state.banner));
  }
  if (state.retryQueue.length > 0) {
    const n = state.retryQueue.length;
    root.appendChild(el("div", {
      class: "retry-note", "data-testid": "retry-note",
    }, `${n} ${n === 1 ? "decision" : "decisions"} saved locally, retrying in background`));
  }
  const main = el("main");
  switch (state.phase) {
    case "loading":
      main.appendChild(el("p", { class: "status" }, "loading…"));
      break;
    case "error": {
      main.appendChild(el("p", { class: "status error" },
                          "service unreachable; decisions are disabled"));
      const retry = el("button", { "data-testid": "retry", class: "retry" },
                       "retry connection");
      retry.addEventListener("click", () => handlers.retry());
      main.appendChild(retry);
      if (state.pair) {
        main.appendChild(renderPair(state.pair, state.remaining, handlers, true));
      }
      break;
    }
    case "done":
      main.appendChild(renderDone(state));
      break;
    case "reviewing":
      if (state.pair) {
        main.appendChild(renderPair(state.pair, state.remaining, handlers, false));
      }
      break;
  }
  root.appendChild(main);
  if (state.summary) {
    root.appendChild(renderDashboard(state.summary));
  }
  if (state.history.length > 0) {
    root.appendChild(renderHistory(state));
  }
}

function renderHeader(state: AppState): HTMLElement {
  const header = el("header");
  header.appendChild(el("h1", {}, "Pair review"));
  if (state.summary) {
    const { decided, total } = state.summary;
    const wrap = el("div", { class: "progress" });
    wrap.appendChild(el("span", { "data-testid": "progress" }, `${decided}/${total}`));
    const bar = el("div", { class: "bar" });
    const fill = el("div", { class: "fill" });
    fill.style.width = total > 0 ? truncatedPercent(decided, total, 0) : "0%";
    bar.appendChild(fill);
    wrap.appendChild(bar);
    header.appendChild(wrap);
  }
  return header;
}

function renderPair(pair: PairView, remaining: number, handlers: Handlers,
                    disabled: boolean): HTMLElement {
  const card = el("article", { class: "pair-card" });

  const head = el("div", { class: "pair-head" });
  head.appendChild(el("span", { "data-testid": "pair-id", class: "pair-id" },
                      pair.pair_id));
  head.appendChild(el("span", { class: "state" }, pair.state));
  head.appendChild(el("span", { "data-testid": "xi", class: "xi" },
                      `ξ ${formatXi(pair.xi)}`));
  const chips = el("span", { class: "chips", "data-testid": "pattern" });
  for (const chip of patternChips(pair.pattern)) {
    chips.appendChild(el("span", {
      class: chip.missing ? "chip missing" : "chip",
    }, chip.text));
  }
  head.appendChild(chips);
  head.appendChild(el("span", { "data-testid": "remaining", class: "remaining" },
                      `${remaining} remaining`));
  card.appendChild(head);

  const table = el("table", { class: "compare", "data-testid": "compare" });
  const thead = el("thead");
  const headRow = el("tr");
  for (const title of ["field", "dataset A", "dataset B"]) {
    headRow.appendChild(el("th", {}, title));
  }
  thead.appendChild(headRow);
  table.appendChild(thead);
  const tbody = el("tbody");
  for (const name of SIDE_FIELD_ORDER) {
    const row = el("tr");
    row.appendChild(el("th", { scope: "row" }, name.replace(/_/g, " ")));
    for (const side of ["a", "b"] as const) {
      const shown = formatField(pair[side][name]);
      row.appendChild(el("td", {
        class: shown.missing ? "missing" : "value",
        "data-testid": `field-${name}-${side}`,
      }, shown.text));
    }
    tbody.appendChild(row);
  }
  table.appendChild(tbody);
  card.appendChild(table);

  const actions = el("div", { class: "actions" });
  for (const decision of DECISIONS) {
    const button = el("button", {
      "data-testid": `btn-${decision}`,
      "data-decision": decision,
    }) as HTMLButtonElement;
    button.appendChild(document.createTextNode(decision + " "));
    button.appendChild(el("kbd", {}, SHORTCUTS[decision]));
    button.disabled = disabled;
    button.addEventListener("click", () => handlers.decide(decision));
    actions.appendChild(button);
  }
  card.appendChild(actions);
  return card;
}

function renderDone(state: AppState): HTMLElement {
  const section = el("section", { class: "done", "data-testid": "done" });
  section.appendChild(el("h2", {}, "Queue complete"));
  if (state.retryQueue.length > 0) {
    section.appendChild(el("p", {},
      "Some decisions are still being delivered; keep this page open."));
  } else {
    section.appendChild(el("p", {}, "Every pair has a recorded decision."));
  }
  return section;
}

function renderDashboard(summary: Summary): HTMLElement {
  const section = el("section", { class: "dashboard", "data-testid": "dashboard" });
  section.appendChild(el("h2", {}, "Adjudication summary"));
  const grid = el("div", { class: "tiles" });
  for (const decision of DECISIONS) {
    const tile = el("div", { class: `tile ${decision}` });
    tile.appendChild(el("div", { class: "label" }, decision));
    tile.appendChild(el("div", {
      class: "count", "data-testid": `count-${decision}`,
    }, String(summary.counts[decision])));
    tile.appendChild(el("div", {
      class: "pct", "data-testid": `percent-${decision}`,
    }, summary.percent ? summary.percent[decision] : "—"));
    grid.appendChild(tile);
  }
  const precision = el("div", { class: "tile precision" });
  precision.appendChild(el("div", { class: "label" }, "review precision"));
  precision.appendChild(el("div", {
    class: "pct", "data-testid": "review-precision",
  }, summary.review_precision_display ?? "—"));
  grid.appendChild(precision);
  section.appendChild(grid);
  section.appendChild(el("p", { class: "totals", "data-testid": "totals" },
    `${summary.decided} decided · ${summary.pending} pending · ` +
    `${summary.total} total`));
  return section;
}

function renderHistory(state: AppState): HTMLElement {
  const section = el("section", { class: "history" });
  section.appendChild(el("h2", {}, "Recent decisions"));
  const list = el("ul", { "data-testid": "history" });
  for (const entry of state.history.slice(-8).reverse()) {
    list.appendChild(el("li", { class: entry.status },
      `${entry.pair_id}: ${entry.decision} (${entry.status})`));
  }
  section.appendChild(list);
  return section;
}
