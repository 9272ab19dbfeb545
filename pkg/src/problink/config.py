"""Declarative pipeline configuration (one YAML file drives a whole run).

The file names the two input datasets with their schema mappings, the
comparison fields, the filter rules, and the model/threshold settings.
Paths inside the file resolve relative to the file itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from typing import Optional

import yaml

from .comparators import NUMERIC, STRING_JW, FieldConfig
from .schema_ingest import (
    DEFAULT_EPOCH,
    DEFAULT_EXCLUDED_CATEGORIES,
    DEFAULT_FIREARM_KEYWORDS,
    DEFAULT_FIREARM_WEAPONS,
    FilterRuleSet,
    SchemaError,
    SchemaMapping,
    default_eligibility,
)

COMPARABLE_FIELDS = ("city", "zip", "days_since_start", "num_killed")

DEFAULT_FIELDS = (
    FieldConfig("city", STRING_JW, cutoffs=(0.92, 0.88)),
    FieldConfig("days_since_start", NUMERIC, tolerance=1),
    FieldConfig("num_killed", NUMERIC, tolerance=0),
    FieldConfig("zip", NUMERIC, tolerance=0),
)


class ConfigError(ValueError):
    """The config file is missing, unparseable, or inconsistent."""


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    path: Path
    mapping: SchemaMapping
    apply_scope_filter: bool = False
    apply_eligibility_filter: bool = False
    absent_fields: tuple[str, ...] = ()


@dataclass(frozen=True)
class LinkageConfig:
    dataset_a: DatasetConfig
    dataset_b: DatasetConfig
    fields: tuple[FieldConfig, ...] = DEFAULT_FIELDS
    threshold: float = 0.85
    retain_floor: float = 0.5
    min_block_size: int = 10
    epoch: date = DEFAULT_EPOCH
    em_tol: float = 1e-6
    em_max_iter: int = 5000
    jobs: int = 1
    rules: FilterRuleSet = field(default_factory=FilterRuleSet)

    def __post_init__(self):
        if not self.fields:
            raise ConfigError("at least one comparison field is required")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0,1), got {self.threshold}")
        if not 0.0 <= self.retain_floor <= self.threshold:
            raise ConfigError("retain_floor must lie in [0, threshold]")
        for fc in self.fields:
            if fc.field not in COMPARABLE_FIELDS:
                raise ConfigError(
                    f"cannot compare field {fc.field!r}; choose from {COMPARABLE_FIELDS}")
        for ds in (self.dataset_a, self.dataset_b):
            _check_fields_produced(ds, self.fields)

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(fc.field for fc in self.fields)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(fc.levels for fc in self.fields)


def _check_fields_produced(ds: DatasetConfig, fields: tuple[FieldConfig, ...]) -> None:
    produced = set(ds.mapping.column_map.values())
    if ds.mapping.date_column:
        produced.add("days_since_start")
    for fc in fields:
        if fc.field not in produced and fc.field not in ds.absent_fields:
            raise ConfigError(
                f"dataset {ds.name!r} does not produce comparison field {fc.field!r}; "
                f"map a column to it or list it under absent_fields")


def load_config(path) -> LinkageConfig:
    raw = _read_yaml(path)
    base = Path(path).parent
    try:
        dataset_a = _parse_dataset(raw, "dataset_a", base)
        dataset_b = _parse_dataset(raw, "dataset_b", base)
        fields = _parse_fields(raw.get("fields"))
        rules = _parse_rules(raw.get("filters") or {})
        em = raw.get("em") or {}
        return LinkageConfig(
            dataset_a=dataset_a,
            dataset_b=dataset_b,
            fields=fields,
            threshold=float(raw.get("threshold", 0.85)),
            retain_floor=float(raw.get("retain_floor", 0.5)),
            min_block_size=int(raw.get("min_block_size", 10)),
            epoch=_parse_date(raw.get("epoch", DEFAULT_EPOCH)),
            em_tol=float(em.get("tol", 1e-6)),
            em_max_iter=int(em.get("max_iter", 5000)),
            jobs=int(raw.get("jobs", 1)),
            rules=rules,
        )
    except (SchemaError, ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def _read_yaml(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return raw


def _parse_dataset(raw: dict, key: str, base: Path) -> DatasetConfig:
    section = raw.get(key)
    if not isinstance(section, dict):
        raise ConfigError(f"config section {key!r} is required")
    if "path" not in section:
        raise ConfigError(f"{key}: 'path' is required")
    name = str(section.get("name", key))
    columns = section.get("columns") or {}
    if not isinstance(columns, dict):
        raise ConfigError(f"{key}: 'columns' must map source columns to canonical fields")
    date_section = section.get("date") or {}
    mapping = SchemaMapping(
        source_name=name,
        column_map={str(k): str(v) for k, v in columns.items()},
        date_column=date_section.get("column"),
        date_format=str(date_section.get("format", "%Y-%m-%d")),
        required_fields=frozenset(section.get("required") or ()),
        passthrough=bool(section.get("passthrough", True)),
        id_column=section.get("id_column"),
    )
    path = Path(section["path"])
    if not path.is_absolute():
        path = base / path
    return DatasetConfig(
        name=name,
        path=path,
        mapping=mapping,
        apply_scope_filter=bool(section.get("scope_filter", False)),
        apply_eligibility_filter=bool(section.get("eligibility_filter", False)),
        absent_fields=tuple(section.get("absent_fields") or ()),
    )


def _parse_fields(entries) -> tuple[FieldConfig, ...]:
    if entries is None:
        return DEFAULT_FIELDS
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'fields' must be a non-empty list")
    out = []
    for entry in entries:
        kind = entry.get("kind", NUMERIC)
        kwargs = {}
        if "cutoffs" in entry:
            kwargs["cutoffs"] = tuple(float(c) for c in entry["cutoffs"])
        if "tolerance" in entry:
            kwargs["tolerance"] = float(entry["tolerance"])
        out.append(FieldConfig(entry["field"], kind, **kwargs))
    return tuple(out)


def _parse_rules(section: dict) -> FilterRuleSet:
    eligibility = section.get("eligibility", "default")
    if eligibility == "default":
        table = default_eligibility()
    elif eligibility is None:
        table = ()
    else:
        table = tuple((str(e["state"]).upper(), int(e["first_year"]), int(e["last_year"]))
                      for e in eligibility)
    return FilterRuleSet(
        excluded_incident_categories=frozenset(
            section.get("excluded_categories", DEFAULT_EXCLUDED_CATEGORIES)),
        firearm_weapon_values=frozenset(
            section.get("firearm_weapons", DEFAULT_FIREARM_WEAPONS)),
        firearm_cause_keywords=frozenset(
            section.get("firearm_keywords", DEFAULT_FIREARM_KEYWORDS)),
        eligibility=table,
    )


def _parse_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return datetime.strptime(str(value), "%Y-%m-%d").date()


def with_overrides(config: LinkageConfig, threshold: Optional[float] = None,
                   jobs: Optional[int] = None) -> LinkageConfig:
    """CLI flags win over file values."""
    updates = {}
    if threshold is not None:
        updates["threshold"] = threshold
        if config.retain_floor > threshold:
            updates["retain_floor"] = threshold
    if jobs is not None:
        updates["jobs"] = jobs
    return replace(config, **updates) if updates else config
