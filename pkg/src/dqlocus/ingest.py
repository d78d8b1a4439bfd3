"""Dataset manifests and immutable typed snapshots of tabular extracts.

A manifest declares what each column means (semantic type, entry mode,
generating actor, constraints) and which extract stage the table sits at
(pre- or post-transformation). Loading coerces cells per semantic type;
values that fail coercion are recorded as data for conformance checks,
never as load errors. Dates and timestamps parse as ISO-8601 only, which
keeps loading deterministic across platforms.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any

from .errors import (
    DanglingColumnReference,
    DuplicateFieldName,
    HeaderMalformed,
    MissingColumn,
    SchemaViolation,
)

DEFAULT_MISSING_SENTINELS = frozenset({"", "NULL", "NA"})


class SemanticType(str, Enum):
    CODE = "Code"
    CATEGORY = "Category"
    TEXT = "Text"
    NUMBER = "Number"
    DATE = "Date"
    TIMESTAMP = "Timestamp"


class EntryMode(str, Enum):
    EHR_ENFORCED = "EhrEnforced"
    FREE_ENTRY = "FreeEntry"
    AUTO_GENERATED = "AutoGenerated"
    DEVICE_GENERATED = "DeviceGenerated"


class Stage(str, Enum):
    SOURCE = "SourceExtract"
    TRANSFORMED = "TransformedExtract"


@dataclass(frozen=True)
class PolicyCondition:
    """Field is required only on rows where ``field`` takes one of ``values``."""

    field: str
    values: frozenset[str]

    def describe(self, required_field: str) -> str:
        vals = sorted(self.values)
        where = f"{self.field} = {vals[0]}" if len(vals) == 1 else f"{self.field} in [{', '.join(vals)}]"
        return f"states {required_field} required only where {where}"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    semantic_type: SemanticType
    entry_mode: EntryMode
    generating_actor: str
    allowed_values: frozenset[str] | None = None
    numeric_range: tuple[float, float] | None = None
    format_pattern: str | None = None
    required: bool = False
    policy_condition: PolicyCondition | None = None


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    stage: Stage
    fields: tuple[FieldSpec, ...]
    actor_id_column: str | None = None
    record_timestamp_column: str | None = None
    availability_timestamp_column: str | None = None
    key_column: str | None = None
    missing_sentinels: frozenset[str] = DEFAULT_MISSING_SENTINELS

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def get_field(self, name: str) -> FieldSpec | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass(frozen=True)
class Column:
    """One snapshot column: typed values plus explicit missing/failure sets.

    ``values[i]`` is the typed value, or None when row ``i`` is missing or
    failed coercion; the three states partition the rows exactly.
    """

    name: str
    values: tuple[Any, ...]
    missing: frozenset[int]
    failures: tuple[tuple[int, str], ...] = ()  # (row index, raw text)

    @property
    def failed_rows(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.failures)

    def typed_count(self) -> int:
        return len(self.values) - len(self.missing) - len(self.failures)

    def present_rows(self) -> list[int]:
        """Rows that are not missing (typed values and coercion failures)."""
        return [i for i in range(len(self.values)) if i not in self.missing]


@dataclass(frozen=True)
class DatasetSnapshot:
    manifest: DatasetManifest
    row_count: int
    columns: dict[str, Column]

    def column(self, name: str) -> Column:
        return self.columns[name]


# --- manifest loading -----------------------------------------------------

_MANIFEST_KEYS = {
    "dataset_id",
    "stage",
    "fields",
    "actor_id_column",
    "record_timestamp_column",
    "availability_timestamp_column",
    "key_column",
    "missing_sentinels",
}
_FIELD_KEYS = {
    "name",
    "semantic_type",
    "entry_mode",
    "generating_actor",
    "allowed_values",
    "numeric_range",
    "format_pattern",
    "required",
    "policy_condition",
}


def _require_str(doc: dict, key: str, where: str) -> str:
    value = doc.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"{where}: {key!r} must be a non-empty string")
    return value


def _optional_str(doc: dict, key: str, where: str) -> str | None:
    value = doc.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise SchemaViolation(f"{where}: {key!r} must be a string")
    return value


def _parse_field(doc: Any, index: int) -> FieldSpec:
    where = f"fields[{index}]"
    if not isinstance(doc, dict):
        raise SchemaViolation(f"{where}: field must be an object")
    unknown = set(doc) - _FIELD_KEYS
    if unknown:
        raise SchemaViolation(f"{where}: unknown keys {sorted(unknown)}")
    name = _require_str(doc, "name", where)
    try:
        semantic = SemanticType(_require_str(doc, "semantic_type", where))
        entry = EntryMode(_require_str(doc, "entry_mode", where))
    except ValueError as e:
        raise SchemaViolation(f"{where}: {e}") from None
    actor = _require_str(doc, "generating_actor", where)

    allowed = doc.get("allowed_values")
    if allowed is not None:
        if not isinstance(allowed, list) or not all(isinstance(v, str) for v in allowed):
            raise SchemaViolation(f"{where}: 'allowed_values' must be a list of strings")
        allowed = frozenset(allowed)

    rng = doc.get("numeric_range")
    if rng is not None:
        if (
            not isinstance(rng, list)
            or len(rng) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rng)
        ):
            raise SchemaViolation(f"{where}: 'numeric_range' must be [min, max]")
        rng = (float(rng[0]), float(rng[1]))

    pattern = _optional_str(doc, "format_pattern", where)
    if pattern is not None:
        try:
            re.compile(pattern)
        except re.error as e:
            raise SchemaViolation(f"{where}: bad format_pattern: {e}") from None

    required = doc.get("required", False)
    if not isinstance(required, bool):
        raise SchemaViolation(f"{where}: 'required' must be a boolean")

    policy = doc.get("policy_condition")
    if policy is not None:
        if not isinstance(policy, dict) or set(policy) - {"field", "values"}:
            raise SchemaViolation(f"{where}: 'policy_condition' must be {{field, values}}")
        pc_field = _require_str(policy, "field", f"{where}.policy_condition")
        pc_values = policy.get("values")
        if not isinstance(pc_values, list) or not pc_values or not all(
            isinstance(v, str) for v in pc_values
        ):
            raise SchemaViolation(
                f"{where}: 'policy_condition.values' must be a non-empty list of strings"
            )
        policy = PolicyCondition(pc_field, frozenset(pc_values))

    if entry is EntryMode.EHR_ENFORCED and allowed is None and pattern is None:
        raise SchemaViolation(
            f"{where}: EhrEnforced field {name!r} needs 'allowed_values' or 'format_pattern'"
        )

    return FieldSpec(
        name=name,
        semantic_type=semantic,
        entry_mode=entry,
        generating_actor=actor,
        allowed_values=allowed,
        numeric_range=rng,
        format_pattern=pattern,
        required=required,
        policy_condition=policy,
    )


def load_manifest(text: str | bytes) -> DatasetManifest:
    """Parse and validate a manifest document (strict: unknown keys rejected)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"manifest is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("manifest must be a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise SchemaViolation(f"manifest: unknown keys {sorted(unknown)}")

    dataset_id = _require_str(doc, "dataset_id", "manifest")
    try:
        stage = Stage(_require_str(doc, "stage", "manifest"))
    except ValueError as e:
        raise SchemaViolation(f"manifest: {e}") from None

    raw_fields = doc.get("fields")
    if not isinstance(raw_fields, list) or not raw_fields:
        raise SchemaViolation("manifest: 'fields' must be a non-empty list")
    fields = tuple(_parse_field(f, i) for i, f in enumerate(raw_fields))

    names = [f.name for f in fields]
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise DuplicateFieldName(f"field {name!r} defined more than once")
        seen.add(name)

    sentinels = doc.get("missing_sentinels")
    if sentinels is None:
        sentinels = DEFAULT_MISSING_SENTINELS
    else:
        if not isinstance(sentinels, list) or not all(isinstance(s, str) for s in sentinels):
            raise SchemaViolation("manifest: 'missing_sentinels' must be a list of strings")
        sentinels = frozenset(sentinels)

    manifest = DatasetManifest(
        dataset_id=dataset_id,
        stage=stage,
        fields=fields,
        actor_id_column=_optional_str(doc, "actor_id_column", "manifest"),
        record_timestamp_column=_optional_str(doc, "record_timestamp_column", "manifest"),
        availability_timestamp_column=_optional_str(doc, "availability_timestamp_column", "manifest"),
        key_column=_optional_str(doc, "key_column", "manifest"),
        missing_sentinels=sentinels,
    )

    field_names = set(names)
    for label, ref in (
        ("actor_id_column", manifest.actor_id_column),
        ("record_timestamp_column", manifest.record_timestamp_column),
        ("availability_timestamp_column", manifest.availability_timestamp_column),
        ("key_column", manifest.key_column),
    ):
        if ref is not None and ref not in field_names:
            raise DanglingColumnReference(f"manifest: {label} references unknown field {ref!r}")
    for f in fields:
        if f.policy_condition is not None and f.policy_condition.field not in field_names:
            raise DanglingColumnReference(
                f"field {f.name!r}: policy_condition references unknown field"
                f" {f.policy_condition.field!r}"
            )
    return manifest


def serialize_manifest(manifest: DatasetManifest) -> str:
    """Render a manifest back to its JSON document form."""
    doc: dict[str, Any] = {
        "dataset_id": manifest.dataset_id,
        "stage": manifest.stage.value,
        "fields": [],
    }
    for f in manifest.fields:
        entry: dict[str, Any] = {
            "name": f.name,
            "semantic_type": f.semantic_type.value,
            "entry_mode": f.entry_mode.value,
            "generating_actor": f.generating_actor,
        }
        if f.allowed_values is not None:
            entry["allowed_values"] = sorted(f.allowed_values)
        if f.numeric_range is not None:
            entry["numeric_range"] = list(f.numeric_range)
        if f.format_pattern is not None:
            entry["format_pattern"] = f.format_pattern
        if f.required:
            entry["required"] = True
        if f.policy_condition is not None:
            entry["policy_condition"] = {
                "field": f.policy_condition.field,
                "values": sorted(f.policy_condition.values),
            }
        doc["fields"].append(entry)
    for key, value in (
        ("actor_id_column", manifest.actor_id_column),
        ("record_timestamp_column", manifest.record_timestamp_column),
        ("availability_timestamp_column", manifest.availability_timestamp_column),
        ("key_column", manifest.key_column),
    ):
        if value is not None:
            doc[key] = value
    if manifest.missing_sentinels != DEFAULT_MISSING_SENTINELS:
        doc["missing_sentinels"] = sorted(manifest.missing_sentinels)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


# --- dataset loading --------------------------------------------------------

def _coerce(raw: str, semantic: SemanticType) -> tuple[Any, bool]:
    """Coerce a raw cell; returns (value, ok)."""
    if semantic in (SemanticType.CODE, SemanticType.CATEGORY, SemanticType.TEXT):
        return raw, True
    if semantic is SemanticType.NUMBER:
        try:
            return float(raw), True
        except ValueError:
            return None, False
    if semantic is SemanticType.DATE:
        try:
            return date.fromisoformat(raw), True
        except ValueError:
            return None, False
    # timestamp: ISO-8601; aware values are normalized to naive UTC so all
    # values in a column compare consistently
    try:
        value = datetime.fromisoformat(raw)
    except ValueError:
        return None, False
    if value.tzinfo is not None:
        value = value.astimezone(timezone.utc).replace(tzinfo=None)
    return value, True


def load_dataset(text: str | bytes, manifest: DatasetManifest) -> DatasetSnapshot:
    """Load a CSV extract against its manifest into an immutable snapshot.

    The header must name a superset of the manifest fields. Sentinel cells
    become missing; cells that fail type coercion are retained as
    coercion failures.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise HeaderMalformed("dataset has no header row") from None
    if any(not h for h in header):
        raise HeaderMalformed("header contains an empty column name")
    if len(set(header)) != len(header):
        raise HeaderMalformed("header contains duplicate column names")

    positions = {name: i for i, name in enumerate(header)}
    for f in manifest.fields:
        if f.name not in positions:
            raise MissingColumn(f"dataset is missing manifest column {f.name!r}")

    rows = [row for row in reader if row]  # RFC-4180: ignore blank lines
    row_count = len(rows)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise HeaderMalformed(f"row {i} has {len(row)} cells, header has {len(header)}")

    columns: dict[str, Column] = {}
    sentinels = manifest.missing_sentinels
    for f in manifest.fields:
        pos = positions[f.name]
        values: list[Any] = []
        missing: set[int] = set()
        failures: list[tuple[int, str]] = []
        for i, row in enumerate(rows):
            raw = row[pos]
            if raw in sentinels:
                values.append(None)
                missing.add(i)
                continue
            value, ok = _coerce(raw, f.semantic_type)
            if ok:
                values.append(value)
            else:
                values.append(None)
                failures.append((i, raw))
        columns[f.name] = Column(
            name=f.name,
            values=tuple(values),
            missing=frozenset(missing),
            failures=tuple(failures),
        )
    return DatasetSnapshot(manifest=manifest, row_count=row_count, columns=columns)
