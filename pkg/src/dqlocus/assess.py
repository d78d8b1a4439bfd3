"""Deterministic data quality checks over dataset snapshots.

All rates are exact rationals built from integer counts, so stratified
sums reconcile with overall counts exactly and results never depend on
row order or evaluation order. A check with an empty denominator is
NotAssessable, a distinct state that is never rendered as 0% or 100%.

Missing and nonconforming are disjoint: missing cells never enter a
conformance denominator, and coercion failures (present but malformed)
count against conformance, not completeness numerators.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from fractions import Fraction
from typing import Any

from .errors import (
    CheckConfigError,
    DqError,
    InvalidRange,
    KeyColumnMissing,
    KeyMismatch,
    MissingConfig,
    NoActorColumn,
    NonNumericField,
    NonTemporalField,
    NoTimestampColumns,
    SchemaViolation,
    StageMismatch,
    UnknownField,
)
from .ingest import Column, DatasetManifest, DatasetSnapshot, SemanticType, Stage
from .taxonomy import DQParameter, parameter_by_name

#: Stratum key for rows whose actor id cell is missing.
UNATTRIBUTED_STRATUM = "<unattributed>"

#: Reserved subset token: restrict a completeness check to rows where the
#: field is required (per its policy condition).
WHERE_REQUIRED = "where-required"


class CheckKind(str, Enum):
    COMPLETENESS = "Completeness"
    CONFORMANCE_VALUE = "ConformanceValue"
    CONFORMANCE_FORMAT = "ConformanceFormat"
    PLAUSIBILITY_RANGE = "PlausibilityRange"
    PLAUSIBILITY_TEMPORAL = "PlausibilityTemporal"
    DEGENERACY_BY_ACTOR = "DegeneracyByActor"
    TIMELINESS = "Timeliness"
    MAPPING_SUCCESS = "MappingSuccess"


_KIND_PARAMETER = {
    CheckKind.COMPLETENESS: "Completeness",
    CheckKind.CONFORMANCE_VALUE: "Conformance",
    CheckKind.CONFORMANCE_FORMAT: "Conformance",
    CheckKind.PLAUSIBILITY_RANGE: "Plausibility",
    CheckKind.PLAUSIBILITY_TEMPORAL: "Plausibility",
    CheckKind.DEGENERACY_BY_ACTOR: "Plausibility",
    CheckKind.TIMELINESS: "Timeliness",
    CheckKind.MAPPING_SUCCESS: "Interoperability",
}

#: Notation label emitted when an outcome of this kind becomes an assertion.
KIND_LABELS = {
    CheckKind.COMPLETENESS: "Completeness",
    CheckKind.CONFORMANCE_VALUE: "Conformance",
    CheckKind.CONFORMANCE_FORMAT: "Conformance",
    CheckKind.PLAUSIBILITY_RANGE: "Plausibility",
    CheckKind.PLAUSIBILITY_TEMPORAL: "Plausibility",
    CheckKind.DEGENERACY_BY_ACTOR: "Plausibility",
    CheckKind.TIMELINESS: "Timeliness",
    CheckKind.MAPPING_SUCCESS: "Mapping",
}


class CheckStatus(str, Enum):
    OK = "Ok"
    NOT_ASSESSABLE = "NotAssessable"
    ERRORED = "Errored"


class DegeneracyFlag(str, Enum):
    NEVER_RECORDS = "NeverRecords"
    ALWAYS_SAME = "AlwaysSame"


@dataclass(frozen=True)
class SubsetPredicate:
    """Row filter: keep rows where ``field`` has one of ``values``."""

    field: str
    values: frozenset[str]


@dataclass(frozen=True)
class CheckDefinition:
    id: str
    kind: CheckKind
    target_fields: tuple[str, ...]
    subset: SubsetPredicate | str | None = None  # predicate or WHERE_REQUIRED
    stratify_by_actor: bool = False
    stage: Stage | None = None
    config: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class StratumOutcome:
    numerator: int
    denominator: int
    flags: tuple[DegeneracyFlag, ...] = ()


@dataclass(frozen=True)
class Violation:
    row: int
    reason: str


@dataclass(frozen=True)
class CheckOutcome:
    """Result of one check: exact counts, violations, optional strata.

    ``rate`` is numerator/denominator; it is None (not 0, not 1) when the
    check is not assessable. Per-stratum numerators and denominators sum
    exactly to the overall counts.
    """

    check_id: str
    kind: CheckKind
    parameter: DQParameter | None
    status: CheckStatus
    numerator: int = 0
    denominator: int = 0
    target_fields: tuple[str, ...] = ()
    stage: Stage | None = None
    subset: str | None = None
    strata: dict[str, StratumOutcome] | None = None
    violations: tuple[Violation, ...] = ()
    details: dict[str, Any] = field(default_factory=dict)
    error: str | None = None

    @property
    def rate(self) -> Fraction | None:
        if self.status is not CheckStatus.OK or self.denominator == 0:
            return None
        return Fraction(self.numerator, self.denominator)

    def flagged_strata(self) -> dict[str, StratumOutcome]:
        if not self.strata:
            return {}
        return {k: s for k, s in self.strata.items() if s.flags}

    def has_findings(self) -> bool:
        """True when the outcome carries a quality defect worth attributing."""
        if self.status is not CheckStatus.OK:
            return False
        if self.kind is CheckKind.DEGENERACY_BY_ACTOR:
            # inverted semantics: the numerator counts flagged actors
            return self.numerator > 0
        if self.violations:
            return True
        if self.denominator > 0 and self.numerator < self.denominator:
            return True
        return bool(self.flagged_strata())


def _subset_label(subset: SubsetPredicate | str | None) -> str | None:
    if subset is None:
        return None
    if isinstance(subset, str):
        return subset
    return f"{subset.field} in [{', '.join(sorted(subset.values))}]"


def _column(snapshot: DatasetSnapshot, name: str) -> Column:
    if name not in snapshot.columns:
        raise UnknownField(f"field {name!r} is not in manifest {snapshot.manifest.dataset_id!r}")
    return snapshot.columns[name]


def _required_rows(snapshot: DatasetSnapshot, field_name: str) -> list[int]:
    """Rows on which the field is required, honoring its policy condition."""
    spec = snapshot.manifest.get_field(field_name)
    if spec is None:
        raise UnknownField(f"field {field_name!r} is not in the manifest")
    if spec.policy_condition is not None:
        cond = spec.policy_condition
        col = _column(snapshot, cond.field)
        return [
            i
            for i in range(snapshot.row_count)
            if i not in col.missing and str(col.values[i]) in cond.values
        ]
    if spec.required:
        return list(range(snapshot.row_count))
    return []


def _subset_rows(
    snapshot: DatasetSnapshot, field_name: str, subset: SubsetPredicate | str | None
) -> list[int]:
    if subset is None:
        return list(range(snapshot.row_count))
    if subset == WHERE_REQUIRED:
        return _required_rows(snapshot, field_name)
    if isinstance(subset, str):
        raise MissingConfig(f"unknown subset token {subset!r}")
    col = _column(snapshot, subset.field)
    return [
        i
        for i in range(snapshot.row_count)
        if i not in col.missing and str(col.values[i]) in subset.values
    ]


def _actor_of_rows(snapshot: DatasetSnapshot) -> dict[int, str]:
    """Map row index to actor id; missing ids map to the unattributed stratum."""
    actor_col_name = snapshot.manifest.actor_id_column
    if actor_col_name is None:
        raise NoActorColumn(
            f"manifest {snapshot.manifest.dataset_id!r} declares no actor_id_column"
        )
    col = _column(snapshot, actor_col_name)
    out = {}
    for i in range(snapshot.row_count):
        if i in col.missing or col.values[i] is None:
            out[i] = UNATTRIBUTED_STRATUM
        else:
            out[i] = str(col.values[i])
    return out


def _stratify(
    snapshot: DatasetSnapshot, rows_num: set[int], rows_den: list[int]
) -> dict[str, StratumOutcome]:
    actor_of = _actor_of_rows(snapshot)
    num: dict[str, int] = {}
    den: dict[str, int] = {}
    for i in rows_den:
        sid = actor_of[i]
        den[sid] = den.get(sid, 0) + 1
        if i in rows_num:
            num[sid] = num.get(sid, 0) + 1
    return {sid: StratumOutcome(num.get(sid, 0), den[sid]) for sid in sorted(den)}


def _outcome(
    check_id: str,
    kind: CheckKind,
    snapshot: DatasetSnapshot | None,
    rows_den: list[int],
    rows_num: set[int],
    violations: list[Violation],
    *,
    subset: SubsetPredicate | str | None = None,
    stratify: bool = False,
    details: dict[str, Any] | None = None,
    stage: Stage | None = None,
    target_fields: tuple[str, ...] = (),
) -> CheckOutcome:
    parameter = parameter_by_name(_KIND_PARAMETER[kind])
    status = CheckStatus.NOT_ASSESSABLE if not rows_den else CheckStatus.OK
    strata = None
    if stratify and snapshot is not None and rows_den:
        strata = _stratify(snapshot, rows_num, rows_den)
    return CheckOutcome(
        check_id=check_id,
        kind=kind,
        parameter=parameter,
        status=status,
        numerator=len(rows_num),
        denominator=len(rows_den),
        target_fields=target_fields,
        stage=stage if stage is not None else (snapshot.manifest.stage if snapshot else None),
        subset=_subset_label(subset),
        strata=strata,
        violations=tuple(sorted(violations, key=lambda v: (v.row, v.reason))),
        details=details or {},
    )


# --- the checks -------------------------------------------------------------

def check_completeness(
    snapshot: DatasetSnapshot,
    field_name: str,
    subset: SubsetPredicate | str | None = None,
    *,
    check_id: str | None = None,
    stratify_by_actor: bool = False,
) -> CheckOutcome:
    """Fraction of rows (in the subset) carrying a typed value.

    With the ``where-required`` subset token, the denominator is the rows
    on which the field is required per its policy condition. For a full
    check over a policy-conditioned field, the outcome details record
    whether all missingness falls outside the required rows
    (``policy_explained``), which attribution rules consume.
    """
    col = _column(snapshot, field_name)
    rows_den = _subset_rows(snapshot, field_name, subset)
    absent = col.missing | col.failed_rows
    rows_num = {i for i in rows_den if i not in absent}
    violations = [Violation(i, "missing") for i in rows_den if i in col.missing]
    violations += [Violation(i, "malformed") for i in rows_den if i in col.failed_rows]

    details: dict[str, Any] = {}
    spec = snapshot.manifest.get_field(field_name)
    if subset is None and spec is not None and spec.policy_condition is not None:
        required = set(_required_rows(snapshot, field_name))
        missing_rows = {i for i in rows_den if i in absent}
        details["policy_explained"] = bool(missing_rows) and not (missing_rows & required)
        details["policy_text"] = spec.policy_condition.describe(field_name)

    return _outcome(
        check_id or f"completeness:{field_name}",
        CheckKind.COMPLETENESS,
        snapshot,
        rows_den,
        rows_num,
        violations,
        subset=subset,
        stratify=stratify_by_actor,
        details=details,
        target_fields=(field_name,),
    )


class ConformanceMode(str, Enum):
    VALUE = "Value"
    FORMAT = "Format"


def check_conformance(
    snapshot: DatasetSnapshot,
    field_name: str,
    mode: ConformanceMode,
    *,
    check_id: str | None = None,
    stratify_by_actor: bool = False,
    subset: SubsetPredicate | str | None = None,
) -> CheckOutcome:
    """Fraction of non-missing cells that conform.

    Value mode tests membership in the field's allowed set; Format mode
    tests the format pattern, or plain coercion success for typed fields.
    Coercion failures always count as violations.
    """
    col = _column(snapshot, field_name)
    spec = snapshot.manifest.get_field(field_name)
    kind = CheckKind.CONFORMANCE_VALUE if mode is ConformanceMode.VALUE else CheckKind.CONFORMANCE_FORMAT

    pattern = None
    if mode is ConformanceMode.VALUE:
        if spec is None or spec.allowed_values is None:
            raise MissingConfig(f"field {field_name!r} has no allowed_values for a Value check")
    else:
        if spec is not None and spec.format_pattern is not None:
            pattern = re.compile(spec.format_pattern)
        elif spec is not None and spec.semantic_type in (
            SemanticType.CODE,
            SemanticType.CATEGORY,
            SemanticType.TEXT,
        ):
            raise MissingConfig(
                f"field {field_name!r} has no format_pattern and is not a typed column"
            )

    in_subset = set(_subset_rows(snapshot, field_name, subset))
    rows_den = [i for i in col.present_rows() if i in in_subset]
    failed = col.failed_rows
    rows_num: set[int] = set()
    violations: list[Violation] = []
    for i in rows_den:
        if i in failed:
            violations.append(Violation(i, "malformed"))
            continue
        value = col.values[i]
        if mode is ConformanceMode.VALUE:
            if str(value) in spec.allowed_values:  # type: ignore[union-attr]
                rows_num.add(i)
            else:
                violations.append(Violation(i, f"value not allowed: {value}"))
        else:
            if pattern is not None:
                if isinstance(value, str) and pattern.fullmatch(value):
                    rows_num.add(i)
                else:
                    violations.append(Violation(i, f"pattern mismatch: {value}"))
            else:
                rows_num.add(i)  # typed column: coercion succeeded
    return _outcome(
        check_id or f"conformance:{field_name}",
        kind,
        snapshot,
        rows_den,
        rows_num,
        violations,
        subset=subset,
        stratify=stratify_by_actor,
        target_fields=(field_name,),
    )


def check_plausibility_range(
    snapshot: DatasetSnapshot,
    field_name: str,
    minimum: Any,
    maximum: Any,
    *,
    check_id: str | None = None,
    stratify_by_actor: bool = False,
) -> CheckOutcome:
    """Fraction of typed values inside [minimum, maximum], inclusive."""
    col = _column(snapshot, field_name)
    spec = snapshot.manifest.get_field(field_name)
    if spec is None or spec.semantic_type not in (
        SemanticType.NUMBER,
        SemanticType.DATE,
        SemanticType.TIMESTAMP,
    ):
        raise NonNumericField(f"field {field_name!r} is not numeric or date-valued")
    lo, hi = _coerce_bound(minimum, spec.semantic_type), _coerce_bound(maximum, spec.semantic_type)
    if lo > hi:
        raise InvalidRange(f"range minimum {minimum!r} exceeds maximum {maximum!r}")

    absent = col.missing | col.failed_rows
    rows_den = [i for i in range(snapshot.row_count) if i not in absent]
    rows_num: set[int] = set()
    violations: list[Violation] = []
    for i in rows_den:
        value = col.values[i]
        if lo <= value <= hi:
            rows_num.add(i)
        else:
            violations.append(Violation(i, f"out of range: {value}"))
    return _outcome(
        check_id or f"plausibility-range:{field_name}",
        CheckKind.PLAUSIBILITY_RANGE,
        snapshot,
        rows_den,
        rows_num,
        violations,
        stratify=stratify_by_actor,
        details={"min": str(minimum), "max": str(maximum)},
        target_fields=(field_name,),
    )


def _coerce_bound(bound: Any, semantic: SemanticType) -> Any:
    if semantic is SemanticType.NUMBER:
        if isinstance(bound, (int, float)) and not isinstance(bound, bool):
            return float(bound)
        raise InvalidRange(f"numeric field bound must be a number, got {bound!r}")
    if isinstance(bound, str):
        try:
            if semantic is SemanticType.DATE:
                return date.fromisoformat(bound)
            parsed = datetime.fromisoformat(bound)
        except ValueError:
            raise InvalidRange(f"bound {bound!r} is not ISO-8601") from None
        if parsed.tzinfo is not None:  # columns hold naive UTC
            parsed = parsed.astimezone(timezone.utc).replace(tzinfo=None)
        return parsed
    if semantic is SemanticType.DATE and isinstance(bound, date) and not isinstance(bound, datetime):
        return bound
    if semantic is SemanticType.TIMESTAMP and isinstance(bound, datetime):
        return bound
    raise InvalidRange(f"bound {bound!r} does not fit a {semantic.value} field")


def _as_datetime(value: Any) -> datetime:
    if isinstance(value, datetime):
        return value
    return datetime.combine(value, time.min)


def check_plausibility_temporal(
    snapshot: DatasetSnapshot,
    field_before: str,
    field_after: str,
    *,
    check_id: str | None = None,
    stratify_by_actor: bool = False,
) -> CheckOutcome:
    """Fraction of complete pairs with before <= after (equality counts)."""
    for name in (field_before, field_after):
        spec = snapshot.manifest.get_field(name)
        if spec is None:
            raise UnknownField(f"field {name!r} is not in the manifest")
        if spec.semantic_type not in (SemanticType.DATE, SemanticType.TIMESTAMP):
            raise NonTemporalField(f"field {name!r} is not date/timestamp-valued")
    before, after = _column(snapshot, field_before), _column(snapshot, field_after)
    absent = before.missing | before.failed_rows | after.missing | after.failed_rows
    rows_den = [i for i in range(snapshot.row_count) if i not in absent]
    rows_num: set[int] = set()
    violations: list[Violation] = []
    for i in rows_den:
        if _as_datetime(before.values[i]) <= _as_datetime(after.values[i]):
            rows_num.add(i)
        else:
            violations.append(Violation(i, f"{field_before} after {field_after}"))
    return _outcome(
        check_id or f"plausibility-temporal:{field_before}<={field_after}",
        CheckKind.PLAUSIBILITY_TEMPORAL,
        snapshot,
        rows_den,
        rows_num,
        violations,
        stratify=stratify_by_actor,
        target_fields=(field_before, field_after),
    )


def check_degeneracy_by_actor(
    snapshot: DatasetSnapshot,
    field_name: str,
    min_records: int = 10,
    max_dominant_share: Fraction | float = Fraction(1),
    *,
    check_id: str | None = None,
) -> CheckOutcome:
    """Per-actor capture screening: flag authors who never record the field
    or always record the same value.

    Rate semantics are inverted relative to the other checks: the rate is
    flagged actors over eligible actors, so lower is better. Strata are
    always present; per-stratum counts are (flagged, eligible) so they sum
    to the overall counts exactly.
    """
    col = _column(snapshot, field_name)
    actor_of = _actor_of_rows(snapshot)
    if not isinstance(max_dominant_share, Fraction):
        max_dominant_share = Fraction(str(max_dominant_share))

    rows_by_actor: dict[str, list[int]] = {}
    for i in range(snapshot.row_count):
        rows_by_actor.setdefault(actor_of[i], []).append(i)

    absent = col.missing | col.failed_rows
    strata: dict[str, StratumOutcome] = {}
    violations: list[Violation] = []
    eligible = 0
    flagged = 0
    per_actor_detail: dict[str, Any] = {}
    for sid in sorted(rows_by_actor):
        rows = rows_by_actor[sid]
        if sid == UNATTRIBUTED_STRATUM or len(rows) < min_records:
            strata[sid] = StratumOutcome(0, 0)
            continue
        eligible += 1
        recorded = [col.values[i] for i in rows if i not in absent]
        flags: list[DegeneracyFlag] = []
        if not recorded:
            flags.append(DegeneracyFlag.NEVER_RECORDS)
        else:
            counts: dict[str, int] = {}
            for value in recorded:
                key = str(value)
                counts[key] = counts.get(key, 0) + 1
            top_value, top_count = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
            share = Fraction(top_count, len(recorded))
            if share >= max_dominant_share:
                flags.append(DegeneracyFlag.ALWAYS_SAME)
                per_actor_detail[sid] = {"dominant_value": top_value, "share": str(share)}
        if flags:
            flagged += 1
            for i in rows:
                violations.append(Violation(i, f"{sid}: {'+'.join(f.value for f in flags)}"))
        strata[sid] = StratumOutcome(1 if flags else 0, 1, tuple(flags))

    parameter = parameter_by_name(_KIND_PARAMETER[CheckKind.DEGENERACY_BY_ACTOR])
    return CheckOutcome(
        check_id=check_id or f"degeneracy:{field_name}",
        kind=CheckKind.DEGENERACY_BY_ACTOR,
        parameter=parameter,
        status=CheckStatus.OK if eligible else CheckStatus.NOT_ASSESSABLE,
        numerator=flagged,
        denominator=eligible,
        target_fields=(field_name,),
        stage=snapshot.manifest.stage,
        strata=strata,
        violations=tuple(sorted(violations, key=lambda v: (v.row, v.reason))),
        details={
            "min_records": min_records,
            "max_dominant_share": str(max_dominant_share),
            "flagged_actors": per_actor_detail,
        },
    )


def check_timeliness(
    snapshot: DatasetSnapshot,
    record_ts_field: str | None = None,
    availability_ts_field: str | None = None,
    max_lag: timedelta | None = None,
    *,
    check_id: str | None = None,
    stratify_by_actor: bool = False,
) -> CheckOutcome:
    """Fraction of complete timestamp pairs available within max_lag.

    A record available before it was recorded is a NegativeLag violation
    and does not count as timely. There is no default max_lag: timeliness
    requirements are use-case context.
    """
    manifest = snapshot.manifest
    record_ts_field = record_ts_field or manifest.record_timestamp_column
    availability_ts_field = availability_ts_field or manifest.availability_timestamp_column
    if record_ts_field is None or availability_ts_field is None:
        raise NoTimestampColumns("timeliness needs record and availability timestamp fields")
    if max_lag is None or max_lag <= timedelta(0):
        raise MissingConfig("timeliness requires a positive max_lag")
    for name in (record_ts_field, availability_ts_field):
        spec = manifest.get_field(name)
        if spec is None:
            raise UnknownField(f"field {name!r} is not in the manifest")
        if spec.semantic_type is not SemanticType.TIMESTAMP:
            raise NoTimestampColumns(f"field {name!r} is not a Timestamp column")

    rec, avail = _column(snapshot, record_ts_field), _column(snapshot, availability_ts_field)
    absent = rec.missing | rec.failed_rows | avail.missing | avail.failed_rows
    rows_den = [i for i in range(snapshot.row_count) if i not in absent]
    rows_num: set[int] = set()
    violations: list[Violation] = []
    lags: list[timedelta] = []
    for i in rows_den:
        lag = _as_datetime(avail.values[i]) - _as_datetime(rec.values[i])
        lags.append(lag)
        if lag < timedelta(0):
            violations.append(Violation(i, "NegativeLag"))
        elif lag > max_lag:
            violations.append(Violation(i, f"lag {lag} exceeds {max_lag}"))
        else:
            rows_num.add(i)

    details: dict[str, Any] = {"max_lag_seconds": max_lag.total_seconds()}
    if lags:
        ordered = sorted(lags)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            median = ordered[mid]
        else:
            median = (ordered[mid - 1] + ordered[mid]) / 2
        details["lag_seconds"] = {
            "min": ordered[0].total_seconds(),
            "median": median.total_seconds(),
            "max": ordered[-1].total_seconds(),
        }
    return _outcome(
        check_id or f"timeliness:{record_ts_field}->{availability_ts_field}",
        CheckKind.TIMELINESS,
        snapshot,
        rows_den,
        rows_num,
        violations,
        stratify=stratify_by_actor,
        details=details,
        target_fields=(record_ts_field, availability_ts_field),
    )


def check_mapping_success(
    source: DatasetSnapshot,
    transformed: DatasetSnapshot,
    source_field: str,
    transformed_field: str | None = None,
    *,
    check_id: str | None = None,
) -> CheckOutcome:
    """Fraction of source-present values still present after transformation.

    Rows correspond through the key column declared in both manifests.
    """
    transformed_field = transformed_field or source_field
    if source.manifest.stage is not Stage.SOURCE or transformed.manifest.stage is not Stage.TRANSFORMED:
        raise StageMismatch(
            f"expected SourceExtract + TransformedExtract, got {source.manifest.stage.value}"
            f" + {transformed.manifest.stage.value}"
        )
    if source.manifest.dataset_id != transformed.manifest.dataset_id:
        raise StageMismatch(
            f"snapshots describe different datasets: {source.manifest.dataset_id!r}"
            f" vs {transformed.manifest.dataset_id!r}"
        )
    key = source.manifest.key_column
    if key is None or transformed.manifest.key_column != key:
        raise KeyColumnMissing("both manifests must declare the same key_column")

    src_rows = _key_index(source, key)
    dst_rows = _key_index(transformed, key)
    unmatched_src = sorted(set(src_rows) - set(dst_rows))
    unmatched_dst = sorted(set(dst_rows) - set(src_rows))
    if unmatched_src or unmatched_dst:
        raise KeyMismatch(
            f"keys only in source: {unmatched_src[:10]}; only in transformed: {unmatched_dst[:10]}"
        )

    src_col = _column(source, source_field)
    dst_col = _column(transformed, transformed_field)
    rows_den: list[int] = []
    rows_num: set[int] = set()
    violations: list[Violation] = []
    for key_value in sorted(src_rows):
        i = src_rows[key_value]
        if i in src_col.missing:
            continue  # value absent at source: transformation owes nothing
        rows_den.append(i)
        j = dst_rows[key_value]
        if j not in dst_col.missing:
            rows_num.add(i)
        else:
            violations.append(Violation(i, f"unmapped (key {key_value})"))
    return _outcome(
        check_id or f"mapping:{source_field}",
        CheckKind.MAPPING_SUCCESS,
        None,
        rows_den,
        rows_num,
        violations,
        details={"key_column": key},
        stage=Stage.TRANSFORMED,
        target_fields=(source_field, transformed_field),
    )


def _key_index(snapshot: DatasetSnapshot, key: str) -> dict[str, int]:
    col = _column(snapshot, key)
    index: dict[str, int] = {}
    duplicates = []
    for i in range(snapshot.row_count):
        if i in col.missing or col.values[i] is None:
            raise KeyMismatch(f"row {i} has no key value in {snapshot.manifest.stage.value}")
        value = str(col.values[i])
        if value in index:
            duplicates.append(value)
        index[value] = i
    if duplicates:
        raise KeyMismatch(f"duplicate key values: {sorted(set(duplicates))[:10]}")
    return index


# --- suite running ----------------------------------------------------------

@dataclass(frozen=True)
class Snapshots:
    """The snapshots a suite runs against, keyed by lifecycle stage."""

    source: DatasetSnapshot | None = None
    transformed: DatasetSnapshot | None = None

    def single(self) -> DatasetSnapshot:
        if self.source is not None and self.transformed is None:
            return self.source
        if self.transformed is not None and self.source is None:
            return self.transformed
        raise CheckConfigError("check must name a stage when two snapshots are loaded")

    def at_stage(self, stage: Stage | None) -> DatasetSnapshot:
        if stage is None:
            return self.single()
        chosen = self.source if stage is Stage.SOURCE else self.transformed
        if chosen is None:
            raise CheckConfigError(f"no snapshot loaded at stage {stage.value}")
        return chosen


def run_check(definition: CheckDefinition, snapshots: Snapshots) -> CheckOutcome:
    """Evaluate one definition; configuration problems raise CheckConfigError."""
    kind = definition.kind
    cfg = definition.config
    if kind is CheckKind.MAPPING_SUCCESS:
        if snapshots.source is None or snapshots.transformed is None:
            raise StageMismatch("mapping check needs both source and transformed snapshots")
        fields = definition.target_fields
        return check_mapping_success(
            snapshots.source,
            snapshots.transformed,
            fields[0],
            fields[1] if len(fields) > 1 else None,
            check_id=definition.id,
        )

    snapshot = snapshots.at_stage(definition.stage)
    if kind in (CheckKind.PLAUSIBILITY_TEMPORAL, CheckKind.TIMELINESS):
        if len(definition.target_fields) != 2:
            raise MissingConfig(f"{kind.value} check must list exactly two target fields")
    elif len(definition.target_fields) != 1:
        raise MissingConfig(f"{kind.value} check must list exactly one target field")

    if kind is CheckKind.COMPLETENESS:
        return check_completeness(
            snapshot,
            definition.target_fields[0],
            definition.subset,
            check_id=definition.id,
            stratify_by_actor=definition.stratify_by_actor,
        )
    if kind in (CheckKind.CONFORMANCE_VALUE, CheckKind.CONFORMANCE_FORMAT):
        mode = ConformanceMode.VALUE if kind is CheckKind.CONFORMANCE_VALUE else ConformanceMode.FORMAT
        return check_conformance(
            snapshot,
            definition.target_fields[0],
            mode,
            check_id=definition.id,
            stratify_by_actor=definition.stratify_by_actor,
            subset=definition.subset,
        )
    if kind is CheckKind.PLAUSIBILITY_RANGE:
        if "min" not in cfg or "max" not in cfg:
            raise MissingConfig("range check requires 'min' and 'max' in config")
        return check_plausibility_range(
            snapshot,
            definition.target_fields[0],
            cfg["min"],
            cfg["max"],
            check_id=definition.id,
            stratify_by_actor=definition.stratify_by_actor,
        )
    if kind is CheckKind.PLAUSIBILITY_TEMPORAL:
        return check_plausibility_temporal(
            snapshot,
            definition.target_fields[0],
            definition.target_fields[1],
            check_id=definition.id,
            stratify_by_actor=definition.stratify_by_actor,
        )
    if kind is CheckKind.DEGENERACY_BY_ACTOR:
        return check_degeneracy_by_actor(
            snapshot,
            definition.target_fields[0],
            min_records=cfg.get("min_records", 10),
            max_dominant_share=cfg.get("max_dominant_share", Fraction(1)),
            check_id=definition.id,
        )
    if kind is CheckKind.TIMELINESS:
        return check_timeliness(
            snapshot,
            definition.target_fields[0],
            definition.target_fields[1],
            parse_duration(cfg["max_lag"]) if "max_lag" in cfg else None,
            check_id=definition.id,
            stratify_by_actor=definition.stratify_by_actor,
        )
    raise MissingConfig(f"unsupported check kind {kind!r}")


def run_suite(definitions: list[CheckDefinition], snapshots: Snapshots) -> list[CheckOutcome]:
    """Run every definition; per-check failures become Errored outcomes."""
    outcomes = []
    for definition in definitions:
        try:
            outcomes.append(run_check(definition, snapshots))
        except DqError as e:
            outcomes.append(
                CheckOutcome(
                    check_id=definition.id,
                    kind=definition.kind,
                    parameter=None,
                    status=CheckStatus.ERRORED,
                    target_fields=definition.target_fields,
                    stage=definition.stage,
                    error=f"{type(e).__name__}: {e}",
                )
            )
    return outcomes


def standard_suite(manifest: DatasetManifest, *, max_lag: timedelta | None = None) -> list[CheckDefinition]:
    """The default per-extract suite: completeness for every field,
    where-required completeness for policy-conditioned fields, conformance
    where configured, and range plausibility where bounded.

    Degeneracy screening is not included: its rate is inverted (lower is
    better), so it is run as an explicit, targeted check. Timeliness joins
    only when a max_lag is supplied.
    """
    stage = manifest.stage
    defs: list[CheckDefinition] = []
    for f in manifest.fields:
        defs.append(
            CheckDefinition(
                id=f"completeness:{f.name}@{stage.value}",
                kind=CheckKind.COMPLETENESS,
                target_fields=(f.name,),
                stage=stage,
            )
        )
        if f.policy_condition is not None:
            defs.append(
                CheckDefinition(
                    id=f"completeness-required:{f.name}@{stage.value}",
                    kind=CheckKind.COMPLETENESS,
                    target_fields=(f.name,),
                    subset=WHERE_REQUIRED,
                    stage=stage,
                )
            )
        if f.allowed_values is not None:
            defs.append(
                CheckDefinition(
                    id=f"conformance-value:{f.name}@{stage.value}",
                    kind=CheckKind.CONFORMANCE_VALUE,
                    target_fields=(f.name,),
                    stage=stage,
                )
            )
        elif f.format_pattern is not None or f.semantic_type in (
            SemanticType.NUMBER,
            SemanticType.DATE,
            SemanticType.TIMESTAMP,
        ):
            defs.append(
                CheckDefinition(
                    id=f"conformance-format:{f.name}@{stage.value}",
                    kind=CheckKind.CONFORMANCE_FORMAT,
                    target_fields=(f.name,),
                    stage=stage,
                )
            )
        if f.numeric_range is not None:
            defs.append(
                CheckDefinition(
                    id=f"plausibility-range:{f.name}@{stage.value}",
                    kind=CheckKind.PLAUSIBILITY_RANGE,
                    target_fields=(f.name,),
                    stage=stage,
                    config={"min": f.numeric_range[0], "max": f.numeric_range[1]},
                )
            )
    if (
        max_lag is not None
        and manifest.record_timestamp_column
        and manifest.availability_timestamp_column
    ):
        defs.append(
            CheckDefinition(
                id=f"timeliness@{stage.value}",
                kind=CheckKind.TIMELINESS,
                target_fields=(manifest.record_timestamp_column, manifest.availability_timestamp_column),
                stage=stage,
                config={"max_lag": f"{int(max_lag.total_seconds())}s"},
            )
        )
    return defs


def mapping_suite(source: DatasetManifest, transformed: DatasetManifest) -> list[CheckDefinition]:
    """Mapping-success checks for every non-key field present at both stages."""
    shared = {f.name for f in source.fields} & {f.name for f in transformed.fields}
    shared.discard(source.key_column or "")
    return [
        CheckDefinition(
            id=f"mapping:{name}",
            kind=CheckKind.MAPPING_SUCCESS,
            target_fields=(name, name),
        )
        for name in sorted(shared)
    ]


# --- suite/outcome (de)serialization ---------------------------------------

_DURATION_RE = re.compile(r"(\d+)([smhd])")
_DURATION_UNIT = {"s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_duration(text: str | int | float) -> timedelta:
    """Parse durations like '30d', '12h', '15m', '45s' (or raw seconds)."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return timedelta(seconds=float(text))
    m = _DURATION_RE.fullmatch(text.strip())
    if m is None:
        raise SchemaViolation(f"duration {text!r} must be '<integer><s|m|h|d>'")
    return timedelta(seconds=int(m.group(1)) * _DURATION_UNIT[m.group(2)])


def load_suite(text: str | bytes) -> list[CheckDefinition]:
    """Load a check-suite document: a JSON list of check definitions."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"suite is not valid JSON: {e}") from None
    if not isinstance(doc, list):
        raise SchemaViolation("suite must be a JSON list of check definitions")
    defs = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(doc):
        where = f"suite[{i}]"
        if not isinstance(entry, dict):
            raise SchemaViolation(f"{where}: definition must be an object")
        unknown = set(entry) - {"id", "kind", "target_fields", "subset", "stratify_by_actor", "stage", "config"}
        if unknown:
            raise SchemaViolation(f"{where}: unknown keys {sorted(unknown)}")
        check_id = entry.get("id")
        if not isinstance(check_id, str) or not check_id:
            raise SchemaViolation(f"{where}: 'id' must be a non-empty string")
        if check_id in seen_ids:
            raise SchemaViolation(f"{where}: duplicate check id {check_id!r}")
        seen_ids.add(check_id)
        try:
            kind = CheckKind(entry.get("kind"))
        except ValueError:
            raise SchemaViolation(f"{where}: unknown kind {entry.get('kind')!r}") from None
        targets = entry.get("target_fields")
        if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
            raise SchemaViolation(f"{where}: 'target_fields' must be a list of strings")
        subset: SubsetPredicate | str | None = None
        raw_subset = entry.get("subset")
        if raw_subset == WHERE_REQUIRED:
            subset = WHERE_REQUIRED
        elif isinstance(raw_subset, dict):
            if set(raw_subset) != {"field", "values"} or not isinstance(raw_subset["field"], str):
                raise SchemaViolation(f"{where}: subset must be {{field, values}}")
            values = raw_subset["values"]
            if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
                raise SchemaViolation(f"{where}: subset values must be a list of strings")
            subset = SubsetPredicate(raw_subset["field"], frozenset(values))
        elif raw_subset is not None:
            raise SchemaViolation(f"{where}: subset must be 'where-required' or {{field, values}}")
        stage = None
        if entry.get("stage") is not None:
            try:
                stage = Stage(entry["stage"])
            except ValueError:
                raise SchemaViolation(f"{where}: unknown stage {entry['stage']!r}") from None
        config = entry.get("config", {})
        if not isinstance(config, dict):
            raise SchemaViolation(f"{where}: 'config' must be an object")
        defs.append(
            CheckDefinition(
                id=check_id,
                kind=kind,
                target_fields=tuple(targets),
                subset=subset,
                stratify_by_actor=bool(entry.get("stratify_by_actor", False)),
                stage=stage,
                config=config,
            )
        )
    return defs


def outcome_to_dict(outcome: CheckOutcome) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "check_id": outcome.check_id,
        "kind": outcome.kind.value,
        "parameter": outcome.parameter.name if outcome.parameter else None,
        "status": outcome.status.value,
        "numerator": outcome.numerator,
        "denominator": outcome.denominator,
        "rate": str(outcome.rate) if outcome.rate is not None else None,
        "target_fields": list(outcome.target_fields),
        "stage": outcome.stage.value if outcome.stage else None,
        "subset": outcome.subset,
        "violations": [[v.row, v.reason] for v in outcome.violations],
        "details": outcome.details,
        "error": outcome.error,
    }
    if outcome.strata is not None:
        doc["strata"] = {
            sid: {
                "numerator": s.numerator,
                "denominator": s.denominator,
                "flags": [f.value for f in s.flags],
            }
            for sid, s in outcome.strata.items()
        }
    else:
        doc["strata"] = None
    return doc


def outcome_from_dict(doc: dict[str, Any]) -> CheckOutcome:
    strata = None
    if doc.get("strata") is not None:
        strata = {
            sid: StratumOutcome(
                s["numerator"], s["denominator"], tuple(DegeneracyFlag(f) for f in s["flags"])
            )
            for sid, s in doc["strata"].items()
        }
    return CheckOutcome(
        check_id=doc["check_id"],
        kind=CheckKind(doc["kind"]),
        parameter=parameter_by_name(doc["parameter"]) if doc.get("parameter") else None,
        status=CheckStatus(doc["status"]),
        numerator=doc["numerator"],
        denominator=doc["denominator"],
        target_fields=tuple(doc.get("target_fields", ())),
        stage=Stage(doc["stage"]) if doc.get("stage") else None,
        subset=doc.get("subset"),
        strata=strata,
        violations=tuple(Violation(row, reason) for row, reason in doc.get("violations", [])),
        details=doc.get("details", {}),
        error=doc.get("error"),
    )


def outcomes_to_json(outcomes: list[CheckOutcome]) -> str:
    doc = {"schema_version": "1", "outcomes": [outcome_to_dict(o) for o in outcomes]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def outcomes_from_json(text: str | bytes) -> list[CheckOutcome]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"outcomes document is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or "outcomes" not in doc:
        raise SchemaViolation("outcomes document must be {schema_version, outcomes}")
    return [outcome_from_dict(o) for o in doc["outcomes"]]
