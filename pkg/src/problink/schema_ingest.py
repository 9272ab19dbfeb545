"""CSV ingestion under a declared schema mapping, normalization, and row filters.

A schema mapping renames source columns onto a fixed canonical vocabulary,
parses the date and count fields, and carries every unmapped column along as
an opaque payload. Rows that cannot be canonicalized are rejected with a
machine-readable reason and kept for the audit side file; they are never
silently dropped.
"""

from __future__ import annotations

import csv
import importlib.resources
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Optional

DEFAULT_EPOCH = date(2014, 1, 1)

SOURCE_A = "A"
SOURCE_B = "B"

# canonical fields a mapping may produce
LINKAGE_FIELDS = ("state", "city", "zip", "event_date", "num_killed")
FILTER_FIELDS = ("incident_category", "weapon", "cause_of_death")
CANONICAL_FIELDS = ("record_id",) + LINKAGE_FIELDS + FILTER_FIELDS

REASON_MISSING_REQUIRED = "missing-required-field"
REASON_BAD_DATE = "bad-date"
REASON_BAD_NUMBER = "bad-number"
REASON_DUPLICATE_ID = "duplicate-record-id"

DEFAULT_FIREARM_KEYWORDS = frozenset({"gun", "firearm", "gunshot", "rifle"})
DEFAULT_FIREARM_WEAPONS = frozenset({"firearm", "non-powder gun", "nonpowder gun"})
DEFAULT_EXCLUDED_CATEGORIES = frozenset({"single suicide", "multiple suicide"})

_PUNCT = re.compile(r"[^A-Z0-9 ]+")
_SPACES = re.compile(r"\s+")
_DIGITS = re.compile(r"\d+")


class SchemaError(ValueError):
    """Fatal configuration problem: bad mapping or file/header mismatch."""


@dataclass(frozen=True)
class SchemaMapping:
    """Declarative description of how one source CSV becomes canonical records."""

    source_name: str
    column_map: dict[str, str]  # source column -> canonical field
    date_column: Optional[str] = None
    date_format: str = "%Y-%m-%d"
    required_fields: frozenset[str] = frozenset()
    passthrough: bool = True
    id_column: Optional[str] = None

    def __post_init__(self):
        seen: dict[str, str] = {}
        for col, canonical in self.column_map.items():
            if canonical not in CANONICAL_FIELDS:
                raise SchemaError(
                    f"{self.source_name}: column {col!r} maps to unknown canonical "
                    f"field {canonical!r} (expected one of {', '.join(CANONICAL_FIELDS)})")
            if canonical == "event_date":
                raise SchemaError(
                    f"{self.source_name}: map the date via date_column, not column_map")
            if canonical in seen:
                raise SchemaError(
                    f"{self.source_name}: columns {seen[canonical]!r} and {col!r} "
                    f"both map to canonical field {canonical!r}")
            seen[canonical] = col
        unknown = set(self.required_fields) - set(CANONICAL_FIELDS) - {"event_date"}
        if unknown:
            raise SchemaError(f"{self.source_name}: unknown required fields {sorted(unknown)}")

    def source_column(self, canonical: str) -> Optional[str]:
        for col, canon in self.column_map.items():
            if canon == canonical:
                return col
        return None


@dataclass(frozen=True)
class CanonicalRecord:
    """One normalized incident row; state is the blocking key."""

    record_id: str
    source: str
    state: Optional[str]
    city: Optional[str]
    zip: Optional[str]
    event_date: Optional[date]
    days_since_start: Optional[int]
    num_killed: Optional[int]
    incident_category: Optional[str] = None
    weapon: Optional[str] = None
    cause_of_death: Optional[str] = None
    payload: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Reject:
    row_number: int  # 1-based over data rows
    reason: str
    row: dict[str, str] = field(compare=False, default_factory=dict)


@dataclass(frozen=True)
class FilterRuleSet:
    excluded_incident_categories: frozenset[str] = DEFAULT_EXCLUDED_CATEGORIES
    firearm_weapon_values: frozenset[str] = DEFAULT_FIREARM_WEAPONS
    firearm_cause_keywords: frozenset[str] = DEFAULT_FIREARM_KEYWORDS
    eligibility: tuple[tuple[str, int, int], ...] = ()

    def __post_init__(self):
        for state, first, last in self.eligibility:
            if first > last:
                raise ValueError(f"eligibility for {state}: first_year {first} > last_year {last}")
        object.__setattr__(self, "excluded_incident_categories",
                           frozenset(v.lower() for v in self.excluded_incident_categories))
        object.__setattr__(self, "firearm_weapon_values",
                           frozenset(v.lower() for v in self.firearm_weapon_values))
        object.__setattr__(self, "firearm_cause_keywords",
                           frozenset(v.lower() for v in self.firearm_cause_keywords))


def default_eligibility() -> tuple[tuple[str, int, int], ...]:
    """Bundled state/year reporting table; users may override it in config."""
    ref = importlib.resources.files("problink.data").joinpath("state_eligibility.csv")
    with ref.open("r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return tuple((r["state"], int(r["first_year"]), int(r["last_year"])) for r in rows)


def normalize_city(raw: Optional[str]) -> Optional[str]:
    """Uppercase, punctuation to spaces, whitespace collapsed; empty -> missing."""
    if raw is None:
        return None
    s = _PUNCT.sub(" ", raw.upper())
    s = _SPACES.sub(" ", s).strip()
    return s or None


def normalize_state(raw: Optional[str]) -> Optional[str]:
    if raw is None:
        return None
    s = raw.strip().upper()
    return s or None


def normalize_zip(raw: Optional[str]) -> Optional[str]:
    """First five digits, left-padded with zeros; ZIP+4 suffixes are dropped."""
    if raw is None:
        return None
    digits = "".join(_DIGITS.findall(raw.strip()))
    if not digits:
        return None
    if len(digits) >= 5:
        return digits[:5]
    return digits.zfill(5)


def days_since_start(d: date, epoch: date = DEFAULT_EPOCH) -> int:
    """Exact calendar-day offset of d from the epoch (leap-year aware)."""
    if d < epoch:
        raise ValueError(f"date {d.isoformat()} precedes epoch {epoch.isoformat()}")
    return (d - epoch).days


def load_csv(path, mapping: SchemaMapping, source: str = SOURCE_A,
             epoch: date = DEFAULT_EPOCH) -> tuple[list[CanonicalRecord], list[Reject]]:
    """Read one CSV into canonical records plus rejects.

    Every data row lands in exactly one of the two outputs. A header missing
    any mapped column is a fatal SchemaError naming the column.
    """
    try:
        fh = open(path, "r", encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise SchemaError(f"{mapping.source_name}: cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise SchemaError(f"{mapping.source_name}: {path} has no header row")
        needed = list(mapping.column_map)
        if mapping.date_column:
            needed.append(mapping.date_column)
        if mapping.id_column:
            needed.append(mapping.id_column)
        for col in needed:
            if col not in header:
                raise SchemaError(
                    f"{mapping.source_name}: header of {path} lacks mapped column {col!r}")
        records: list[CanonicalRecord] = []
        rejects: list[Reject] = []
        seen_ids: set[str] = set()
        mapped_cols = set(needed)
        for row_number, row in enumerate(reader, start=1):
            outcome = _canonicalize_row(row, row_number, mapping, source, epoch, seen_ids)
            if isinstance(outcome, Reject):
                rejects.append(outcome)
                continue
            if mapping.passthrough:
                payload = tuple((col, row.get(col) or "")
                                for col in header if col not in mapped_cols)
                outcome = _with_payload(outcome, payload)
            records.append(outcome)
            seen_ids.add(outcome.record_id)
    return records, rejects


def _with_payload(record: CanonicalRecord, payload) -> CanonicalRecord:
    return CanonicalRecord(**{**record.__dict__, "payload": payload})


def _canonicalize_row(row, row_number, mapping, source, epoch, seen_ids):
    values: dict[str, Optional[str]] = {}
    for col, canonical in mapping.column_map.items():
        raw = (row.get(col) or "").strip()
        values[canonical] = raw or None

    required = set(mapping.required_fields) | {"state"}

    state = normalize_state(values.get("state"))
    if state is None:
        return Reject(row_number, REASON_MISSING_REQUIRED, row)
    city = normalize_city(values.get("city"))
    zip_code = normalize_zip(values.get("zip"))
    for name, value in (("city", city), ("zip", zip_code)):
        if name in required and value is None:
            return Reject(row_number, REASON_MISSING_REQUIRED, row)

    event_date = None
    days = None
    if mapping.date_column:
        raw_date = (row.get(mapping.date_column) or "").strip()
        if raw_date:
            try:
                event_date = datetime.strptime(raw_date, mapping.date_format).date()
                days = days_since_start(event_date, epoch)
            except ValueError:
                return Reject(row_number, REASON_BAD_DATE, row)
        elif "event_date" in required:
            return Reject(row_number, REASON_BAD_DATE, row)

    num_killed = None
    raw_killed = values.get("num_killed")
    if raw_killed is not None:
        try:
            num_killed = int(raw_killed)
        except ValueError:
            return Reject(row_number, REASON_BAD_NUMBER, row)
        if num_killed < 0:
            return Reject(row_number, REASON_BAD_NUMBER, row)
    elif "num_killed" in required:
        return Reject(row_number, REASON_MISSING_REQUIRED, row)

    if mapping.id_column:
        record_id = (row.get(mapping.id_column) or "").strip()
        if not record_id:
            return Reject(row_number, REASON_MISSING_REQUIRED, row)
    else:
        record_id = values.get("record_id") or f"{source}{row_number:07d}"
    if record_id in seen_ids:
        return Reject(row_number, REASON_DUPLICATE_ID, row)

    return CanonicalRecord(
        record_id=record_id,
        source=source,
        state=state,
        city=city,
        zip=zip_code,
        event_date=event_date,
        days_since_start=days,
        num_killed=num_killed,
        incident_category=values.get("incident_category"),
        weapon=values.get("weapon"),
        cause_of_death=values.get("cause_of_death"),
    )


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def filter_scope(record: CanonicalRecord, rules: FilterRuleSet) -> tuple[bool, Optional[str]]:
    """Scope filter: drop excluded incident categories, then require a firearm
    signal in either the weapon value or the cause-of-death text.

    Keyword matching is case-insensitive on whole tokens, so "shotgun" does
    not match the keyword "gun" but "gunshot wound of head" matches "gunshot".
    """
    category = (record.incident_category or "").strip().lower()
    if category and category in rules.excluded_incident_categories:
        return False, "excluded-category"
    weapon = (record.weapon or "").strip().lower()
    if weapon and weapon in rules.firearm_weapon_values:
        return True, None
    cause = record.cause_of_death or ""
    if cause and _tokens(cause) & rules.firearm_cause_keywords:
        return True, None
    return False, "non-firearm"


def filter_eligibility(record: CanonicalRecord, year: Optional[int],
                       rules: FilterRuleSet) -> tuple[bool, Optional[str]]:
    """Keep iff some (state, first_year, last_year) entry covers the record."""
    if year is None:
        return False, "missing-year"
    for state, first, last in rules.eligibility:
        if record.state == state and first <= year <= last:
            return True, None
    return False, "ineligible-state-year"


def write_rejects_csv(path, rejects: Iterable[Reject], header: list[str]) -> None:
    """Audit side file: original columns plus row number and reject reason."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["row_number", "reject_reason"])
        for reject in rejects:
            writer.writerow([reject.row.get(col, "") for col in header]
                            + [reject.row_number, reject.reason])
