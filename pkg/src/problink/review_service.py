"""Clerical review service for pairs the model could not settle.

Reviewers pull the next undecided pair, mark it match, nonmatch, or
undetermined, and the decision is appended to an NDJSON log before the
request is acknowledged. On startup the log is replayed, so a crash or kill
never loses an acknowledged decision. The newest decision per pair wins;
older entries stay in the log as history.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .evaluation import truncated_percent

DECISIONS = ("match", "nonmatch", "undetermined")

SIDE_FIELDS = ("record_id", "city", "zip", "event_date", "days_since_start", "num_killed")


@dataclass(frozen=True)
class ReviewItem:
    pair_id: str
    state: str
    xi: float
    pattern: str
    a: dict[str, str]
    b: dict[str, str]

    def as_json(self, decision: Optional[dict] = None) -> dict:
        out = {
            "pair_id": self.pair_id,
            "state": self.state,
            "xi": self.xi,
            "pattern": self.pattern,
            "a": self.a,
            "b": self.b,
            "decision": None,
            "reviewer": None,
            "decided_at": None,
        }
        if decision is not None:
            out["decision"] = decision["decision"]
            out["reviewer"] = decision.get("reviewer")
            out["decided_at"] = decision.get("decided_at")
        return out


def load_review_queue(path) -> list[ReviewItem]:
    """Read a merged-pair CSV (the review queue or any file of that shape)."""
    items = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            pair_id = row["pair_id"]
            if pair_id in seen:
                raise ValueError(f"duplicate pair_id {pair_id!r} in {path}")
            seen.add(pair_id)
            items.append(ReviewItem(
                pair_id=pair_id,
                state=row.get("state", ""),
                xi=float(row["xi"]),
                pattern=row.get("pattern", ""),
                a={name: row.get(f"a_{name}", "") for name in SIDE_FIELDS},
                b={name: row.get(f"b_{name}", "") for name in SIDE_FIELDS},
            ))
    return items


class DecisionLog:
    """Append-only NDJSON file; every append is flushed and fsynced."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, separators=(",", ":"), sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def replay(self) -> list[dict]:
        """All parseable entries in order; a torn final line is dropped."""
        if not self.path.exists():
            return []
        entries = []
        with open(self.path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    continue
                raise ValueError(f"{self.path}: corrupt log entry on line {i + 1}")
        return entries


class ReviewStore:
    """In-memory queue state backed by the decision log."""

    def __init__(self, items: list[ReviewItem], log: DecisionLog):
        self.items = items
        self.by_id = {item.pair_id: item for item in items}
        self.log = log
        self.decisions: dict[str, dict] = {}
        self.history: list[dict] = []
        self.unknown_replayed = 0
        for entry in log.replay():
            self._apply(entry)

    def _apply(self, entry: dict) -> None:
        self.history.append(entry)
        if entry.get("pair_id") in self.by_id:
            self.decisions[entry["pair_id"]] = entry
        else:
            self.unknown_replayed += 1

    def get(self, pair_id: str) -> Optional[ReviewItem]:
        return self.by_id.get(pair_id)

    def next_pending(self) -> Optional[ReviewItem]:
        for item in self.items:
            if item.pair_id not in self.decisions:
                return item
        return None

    def decide(self, pair_id: str, decision: str, reviewer: str) -> dict:
        if decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}, got {decision!r}")
        if pair_id not in self.by_id:
            raise KeyError(pair_id)
        entry = {
            "pair_id": pair_id,
            "decision": decision,
            "reviewer": reviewer,
            "decided_at": datetime.now(timezone.utc).isoformat(),
        }
        self.log.append(entry)
        self._apply(entry)
        return entry

    def pending_count(self) -> int:
        return len(self.items) - len(self.decisions)

    def summary(self) -> dict:
        counts = {name: 0 for name in DECISIONS}
        for entry in self.decisions.values():
            counts[entry["decision"]] += 1
        decided = sum(counts.values())
        out = {
            "total": len(self.items),
            "decided": decided,
            "pending": len(self.items) - decided,
            "counts": counts,
        }
        if decided:
            out["percent"] = {name: truncated_percent(c, decided, 1)
                              for name, c in counts.items()}
            out["review_precision"] = counts["match"] / decided
            out["review_precision_display"] = truncated_percent(counts["match"], decided, 2)
        else:
            out["percent"] = None
            out["review_precision"] = None
            out["review_precision_display"] = None
        return out

    def export_csv(self) -> str:
        lines = ["pair_id,decision,reviewer,decided_at"]
        for pair_id in sorted(self.decisions):
            entry = self.decisions[pair_id]
            lines.append(",".join([pair_id, entry["decision"],
                                   entry.get("reviewer") or "",
                                   entry.get("decided_at") or ""]))
        return "\n".join(lines) + "\n"


class DecisionIn(BaseModel):
    decision: str
    reviewer: str = "anonymous"


_PLACEHOLDER = """<!doctype html>
<html><head><title>Pair review</title></head>
<body>
<h1>Pair review service</h1>
<p>No UI bundle is installed. The API is live:</p>
<ul>
<li><a href="/api/summary">/api/summary</a></li>
<li><a href="/api/pairs/next">/api/pairs/next</a></li>
<li><a href="/api/export">/api/export</a></li>
</ul>
</body></html>
"""


def create_app(queue_path, log_path, static_dir=None) -> FastAPI:
    store = ReviewStore(load_review_queue(queue_path), DecisionLog(log_path))
    app = FastAPI(title="pair review")
    app.state.store = store

    @app.get("/api/summary")
    def summary():
        return store.summary()

    @app.get("/api/pairs/next")
    def next_pair():
        item = store.next_pending()
        return {
            "pair": None if item is None else item.as_json(),
            "remaining": store.pending_count(),
        }

    @app.get("/api/pairs")
    def list_pairs(status: str = Query("all"), limit: int = Query(100, ge=1, le=10000)):
        if status not in ("all", "pending", "decided"):
            raise HTTPException(400, "status must be all, pending, or decided")
        out = []
        for item in store.items:
            decided = item.pair_id in store.decisions
            if status == "pending" and decided:
                continue
            if status == "decided" and not decided:
                continue
            out.append(item.as_json(store.decisions.get(item.pair_id)))
            if len(out) >= limit:
                break
        return {"pairs": out, "total": len(store.items)}

    @app.get("/api/pairs/{pair_id}")
    def get_pair(pair_id: str):
        item = store.get(pair_id)
        if item is None:
            raise HTTPException(404, f"unknown pair {pair_id!r}")
        return item.as_json(store.decisions.get(pair_id))

    @app.post("/api/pairs/{pair_id}/decision")
    def post_decision(pair_id: str, body: DecisionIn):
        try:
            entry = store.decide(pair_id, body.decision, body.reviewer)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        except KeyError:
            raise HTTPException(404, f"unknown pair {pair_id!r}")
        return {"ok": True, **entry}

    @app.get("/api/export")
    def export():
        return PlainTextResponse(store.export_csv(), media_type="text/csv",
                                 headers={"Content-Disposition":
                                          'attachment; filename="decisions.csv"'})

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder():
            return _PLACEHOLDER

    return app


def serve(queue_path, log_path, static_dir=None, host: str = "127.0.0.1",
          port: int = 8000) -> None:
    import uvicorn

    app = create_app(queue_path, log_path, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
