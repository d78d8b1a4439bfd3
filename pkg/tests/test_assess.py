from __future__ import annotations

import csv
import io
import json
from datetime import timedelta
from fractions import Fraction

import pytest

from dqlocus.assess import (
    CheckDefinition,
    CheckKind,
    CheckStatus,
    ConformanceMode,
    DegeneracyFlag,
    Snapshots,
    SubsetPredicate,
    UNATTRIBUTED_STRATUM,
    WHERE_REQUIRED,
    check_completeness,
    check_conformance,
    check_degeneracy_by_actor,
    check_mapping_success,
    check_plausibility_range,
    check_plausibility_temporal,
    check_timeliness,
    load_suite,
    mapping_suite,
    outcomes_from_json,
    outcomes_to_json,
    parse_duration,
    run_suite,
    standard_suite,
)
from dqlocus.errors import (
    InvalidRange,
    KeyMismatch,
    MissingConfig,
    NoActorColumn,
    NonNumericField,
    SchemaViolation,
    StageMismatch,
    UnknownField,
)
from dqlocus.ingest import load_dataset, load_manifest


def make_snapshot(field_rows: dict[str, list[str]], *, manifest_extra: dict | None = None,
                  fields_extra: list[dict] | None = None, stage: str = "SourceExtract"):
    names = list(field_rows)
    count = len(next(iter(field_rows.values())))
    default_specs = {
        "record_id": {"semantic_type": "Code", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
        "actor_id": {"semantic_type": "Code", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
        "billable": {"semantic_type": "Category", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
        "code": {
            "semantic_type": "Code",
            "entry_mode": "EhrEnforced",
            "generating_actor": "Clinician",
            "allowed_values": ["A", "B", "C", "D", "E"],
        },
        "side": {"semantic_type": "Category", "entry_mode": "FreeEntry", "generating_actor": "Clinician"},
        "age": {"semantic_type": "Number", "entry_mode": "FreeEntry", "generating_actor": "Clinician"},
        "injury_date": {"semantic_type": "Date", "entry_mode": "FreeEntry", "generating_actor": "Clinician"},
        "visit_date": {"semantic_type": "Date", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
        "recorded_at": {"semantic_type": "Timestamp", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
        "available_at": {"semantic_type": "Timestamp", "entry_mode": "AutoGenerated", "generating_actor": "EHRSystem"},
    }
    fields = []
    for name in names:
        spec = {"name": name}
        spec.update(default_specs.get(name, {"semantic_type": "Text", "entry_mode": "FreeEntry", "generating_actor": "Clinician"}))
        fields.append(spec)
    for extra in fields_extra or []:
        for spec in fields:
            if spec["name"] == extra["name"]:
                spec.update(extra)
    doc = {"dataset_id": "t", "stage": stage, "fields": fields}
    doc.update(manifest_extra or {})
    manifest = load_manifest(json.dumps(doc))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for i in range(count):
        writer.writerow([field_rows[n][i] for n in names])
    return load_dataset(buffer.getvalue(), manifest)


def test_completeness_counts_missing():
    snapshot = make_snapshot({"code": ["A"] * 9 + [""]})
    outcome = check_completeness(snapshot, "code")
    assert (outcome.numerator, outcome.denominator) == (9, 10)
    assert outcome.rate == Fraction(9, 10)


def test_completeness_fifteen_percent_missing():
    values = ["A"] * 85 + [""] * 15
    snapshot = make_snapshot({"code": values})
    outcome = check_completeness(snapshot, "code")
    assert outcome.rate == Fraction(85, 100)


def test_completeness_where_required_ignores_non_required_gaps():
    snapshot = make_snapshot(
        {
            "billable": ["Y"] * 8 + ["N"] * 4,
            "code": ["A"] * 8 + [""] * 3 + ["B"],
        },
        fields_extra=[
            {"name": "code", "required": True, "policy_condition": {"field": "billable", "values": ["Y"]}}
        ],
    )
    full = check_completeness(snapshot, "code")
    assert full.rate == Fraction(9, 12)
    assert full.details["policy_explained"] is True
    required_only = check_completeness(snapshot, "code", WHERE_REQUIRED)
    assert required_only.rate == Fraction(1)


def test_completeness_policy_not_explained_when_required_rows_missing():
    snapshot = make_snapshot(
        {
            "billable": ["Y", "Y", "N"],
            "code": ["A", "", ""],
        },
        fields_extra=[
            {"name": "code", "required": True, "policy_condition": {"field": "billable", "values": ["Y"]}}
        ],
    )
    outcome = check_completeness(snapshot, "code")
    assert outcome.details["policy_explained"] is False


def test_completeness_unknown_field():
    snapshot = make_snapshot({"code": ["A"]})
    with pytest.raises(UnknownField):
        check_completeness(snapshot, "nope")


def test_completeness_empty_denominator_not_assessable():
    snapshot = make_snapshot({"billable": ["N"], "code": [""]},
                             fields_extra=[{"name": "code", "policy_condition": {"field": "billable", "values": ["Y"]}}])
    outcome = check_completeness(snapshot, "code", WHERE_REQUIRED)
    assert outcome.status is CheckStatus.NOT_ASSESSABLE
    assert outcome.rate is None


def test_conformance_value_counts_out_of_set():
    snapshot = make_snapshot({"code": ["A", "B", "C", "D", "Z"]})
    outcome = check_conformance(snapshot, "code", ConformanceMode.VALUE)
    assert (outcome.numerator, outcome.denominator) == (4, 5)


def test_conformance_format_counts_coercion_failures():
    values = ["2024-01-0" + str(i + 1) for i in range(6)] + ["bad", "worse", "", ""]
    snapshot = make_snapshot({"injury_date": values})
    outcome = check_conformance(snapshot, "injury_date", ConformanceMode.FORMAT)
    assert (outcome.numerator, outcome.denominator) == (6, 8)
    assert len(outcome.violations) == 2


def test_conformance_all_missing_not_assessable():
    snapshot = make_snapshot({"code": ["", "", ""]})
    outcome = check_conformance(snapshot, "code", ConformanceMode.VALUE)
    assert outcome.status is CheckStatus.NOT_ASSESSABLE


def test_conformance_value_requires_allowed_values():
    snapshot = make_snapshot({"side": ["Left"]})
    with pytest.raises(MissingConfig):
        check_conformance(snapshot, "side", ConformanceMode.VALUE)


def test_plausibility_range_inclusive_bounds():
    snapshot = make_snapshot({"age": ["30", "45", "212"]})
    outcome = check_plausibility_range(snapshot, "age", 0, 120)
    assert (outcome.numerator, outcome.denominator) == (2, 3)
    assert [v.row for v in outcome.violations] == [2]
    at_boundary = make_snapshot({"age": ["0", "0", "0"]})
    assert check_plausibility_range(at_boundary, "age", 0, 120).rate == Fraction(1)


def test_plausibility_range_invalid():
    snapshot = make_snapshot({"age": ["30"]})
    with pytest.raises(InvalidRange):
        check_plausibility_range(snapshot, "age", 120, 0)


def test_plausibility_range_non_numeric_field():
    snapshot = make_snapshot({"side": ["Left"]})
    with pytest.raises(NonNumericField):
        check_plausibility_range(snapshot, "side", 0, 1)


def test_plausibility_temporal_ordering():
    injuries = [f"2024-01-0{i + 1}" for i in range(9)] + ["2024-02-10"]
    visits = [f"2024-01-0{i + 2}" for i in range(8)] + ["2024-01-09", "2024-02-01"]
    snapshot = make_snapshot({"injury_date": injuries, "visit_date": visits})
    outcome = check_plausibility_temporal(snapshot, "injury_date", "visit_date")
    assert (outcome.numerator, outcome.denominator) == (9, 10)


def test_plausibility_temporal_missing_excluded_and_equal_ok():
    snapshot = make_snapshot(
        {"injury_date": ["2024-01-05", "2024-01-05"], "visit_date": ["", "2024-01-05"]}
    )
    outcome = check_plausibility_temporal(snapshot, "injury_date", "visit_date")
    assert (outcome.numerator, outcome.denominator) == (1, 1)


def test_degeneracy_flags_always_same_and_never_records():
    rows_a = [("a1", "Left")] * 50
    rows_b = [("b1", "Left"), ("b1", "Right")] * 25
    rows_c = [("c1", "")] * 40
    actor, side = zip(*(rows_a + rows_b + rows_c))
    snapshot = make_snapshot(
        {"actor_id": list(actor), "side": list(side)},
        manifest_extra={"actor_id_column": "actor_id"},
    )
    outcome = check_degeneracy_by_actor(snapshot, "side")
    flags = {sid: s.flags for sid, s in outcome.strata.items() if s.flags}
    assert flags == {
        "a1": (DegeneracyFlag.ALWAYS_SAME,),
        "c1": (DegeneracyFlag.NEVER_RECORDS,),
    }
    assert outcome.rate == Fraction(2, 3)


def test_degeneracy_min_records_threshold():
    rows = [("tiny", "Left")] * 2 + [("big", "Left"), ("big", "Right")] * 10
    actor, side = zip(*rows)
    snapshot = make_snapshot(
        {"actor_id": list(actor), "side": list(side)},
        manifest_extra={"actor_id_column": "actor_id"},
    )
    outcome = check_degeneracy_by_actor(snapshot, "side", min_records=10)
    assert outcome.strata["tiny"].denominator == 0
    assert outcome.rate == Fraction(0, 1)
    assert not outcome.has_findings()


def test_degeneracy_requires_actor_column():
    snapshot = make_snapshot({"side": ["Left"]})
    with pytest.raises(NoActorColumn):
        check_degeneracy_by_actor(snapshot, "side")


def timeliness_snapshot():
    recorded = ["2024-01-01T00:00:00"] * 3
    available = ["2024-01-01T01:00:00", "2024-01-01T02:00:00", "2024-02-10T00:00:00"]
    return make_snapshot(
        {"recorded_at": recorded, "available_at": available},
        manifest_extra={
            "record_timestamp_column": "recorded_at",
            "availability_timestamp_column": "available_at",
        },
    )


def test_timeliness_threshold():
    snapshot = timeliness_snapshot()
    outcome = check_timeliness(snapshot, max_lag=timedelta(days=30))
    assert (outcome.numerator, outcome.denominator) == (2, 3)
    tight = check_timeliness(snapshot, max_lag=timedelta(hours=1))
    assert (tight.numerator, tight.denominator) == (1, 3)


def test_timeliness_negative_lag_is_violation():
    snapshot = make_snapshot(
        {"recorded_at": ["2024-01-02T00:00:00"], "available_at": ["2024-01-01T00:00:00"]},
        manifest_extra={
            "record_timestamp_column": "recorded_at",
            "availability_timestamp_column": "available_at",
        },
    )
    outcome = check_timeliness(snapshot, max_lag=timedelta(days=30))
    assert [v.reason for v in outcome.violations] == ["NegativeLag"]
    assert outcome.numerator == 0


def test_timeliness_requires_max_lag():
    with pytest.raises(MissingConfig):
        check_timeliness(timeliness_snapshot())


def paired_snapshots(source_codes: list[str], transformed_codes: list[str]):
    n = len(source_codes)
    ids = [f"r{i}" for i in range(n)]
    source = make_snapshot(
        {"record_id": ids, "code": source_codes},
        manifest_extra={"key_column": "record_id"},
    )
    transformed = make_snapshot(
        {"record_id": ids, "code": transformed_codes},
        manifest_extra={"key_column": "record_id"},
        stage="TransformedExtract",
    )
    return source, transformed


def test_mapping_success_92_of_100():
    source_codes = ["A"] * 100
    transformed_codes = ["A"] * 92 + [""] * 8
    source, transformed = paired_snapshots(source_codes, transformed_codes)
    outcome = check_mapping_success(source, transformed, "code")
    assert outcome.rate == Fraction(92, 100)
    assert outcome.parameter is not None and outcome.parameter.name == "Interoperability"


def test_mapping_identity_transform_full_rate():
    source, transformed = paired_snapshots(["A", "B"], ["A", "B"])
    assert check_mapping_success(source, transformed, "code").rate == Fraction(1)


def test_mapping_source_missing_excluded():
    source, transformed = paired_snapshots(["A", ""], ["A", ""])
    outcome = check_mapping_success(source, transformed, "code")
    assert (outcome.numerator, outcome.denominator) == (1, 1)


def test_mapping_stage_mismatch():
    source, _ = paired_snapshots(["A"], ["A"])
    with pytest.raises(StageMismatch):
        check_mapping_success(source, source, "code")


def test_mapping_key_mismatch():
    source = make_snapshot(
        {"record_id": ["r0", "r1"], "code": ["A", "B"]},
        manifest_extra={"key_column": "record_id"},
    )
    transformed = make_snapshot(
        {"record_id": ["r0", "r9"], "code": ["A", "B"]},
        manifest_extra={"key_column": "record_id"},
        stage="TransformedExtract",
    )
    with pytest.raises(KeyMismatch):
        check_mapping_success(source, transformed, "code")


def test_stratified_counts_sum_to_overall():
    snapshot = make_snapshot(
        {
            "actor_id": ["a", "a", "b", "b", ""],
            "code": ["A", "", "B", "Z", "C"],
        },
        manifest_extra={"actor_id_column": "actor_id"},
    )
    outcome = check_completeness(snapshot, "code", stratify_by_actor=True)
    assert outcome.strata is not None and UNATTRIBUTED_STRATUM in outcome.strata
    assert sum(s.numerator for s in outcome.strata.values()) == outcome.numerator
    assert sum(s.denominator for s in outcome.strata.values()) == outcome.denominator


def test_subset_predicate_splits_counts():
    snapshot = make_snapshot(
        {
            "billable": ["Y", "Y", "N", "N"],
            "code": ["A", "", "B", ""],
        }
    )
    on_y = check_completeness(snapshot, "code", SubsetPredicate("billable", frozenset({"Y"})))
    on_n = check_completeness(snapshot, "code", SubsetPredicate("billable", frozenset({"N"})))
    full = check_completeness(snapshot, "code")
    assert on_y.numerator + on_n.numerator == full.numerator
    assert on_y.denominator + on_n.denominator == full.denominator


def test_run_suite_isolates_errors():
    snapshot = make_snapshot({"code": ["A", "B"]})
    defs = [
        CheckDefinition(id="ok1", kind=CheckKind.COMPLETENESS, target_fields=("code",)),
        CheckDefinition(id="broken", kind=CheckKind.COMPLETENESS, target_fields=("missing-field",)),
        CheckDefinition(id="ok2", kind=CheckKind.CONFORMANCE_VALUE, target_fields=("code",)),
    ]
    outcomes = run_suite(defs, Snapshots(source=snapshot))
    assert [o.check_id for o in outcomes] == ["ok1", "broken", "ok2"]
    assert outcomes[1].status is CheckStatus.ERRORED
    assert outcomes[0].status is CheckStatus.OK and outcomes[2].status is CheckStatus.OK


def test_run_suite_empty_and_deterministic():
    snapshot = make_snapshot({"code": ["A"]})
    assert run_suite([], Snapshots(source=snapshot)) == []
    defs = standard_suite(snapshot.manifest)
    assert run_suite(defs, Snapshots(source=snapshot)) == run_suite(defs, Snapshots(source=snapshot))


def test_row_shuffle_leaves_counts_unchanged():
    rows = {"code": ["A", "", "Z", "B", "bad" if False else "C"]}
    snapshot = make_snapshot(rows)
    shuffled = make_snapshot({"code": list(reversed(rows["code"]))})
    a = check_completeness(snapshot, "code")
    b = check_completeness(shuffled, "code")
    assert (a.numerator, a.denominator) == (b.numerator, b.denominator)


def test_outcomes_json_round_trip():
    snapshot = make_snapshot(
        {"actor_id": ["a", "a", "b"], "code": ["A", "", "Z"]},
        manifest_extra={"actor_id_column": "actor_id"},
    )
    defs = standard_suite(snapshot.manifest) + [
        CheckDefinition(
            id="deg", kind=CheckKind.DEGENERACY_BY_ACTOR, target_fields=("code",),
            config={"min_records": 1},
        )
    ]
    outcomes = run_suite(defs, Snapshots(source=snapshot))
    assert outcomes_from_json(outcomes_to_json(outcomes)) == outcomes


def test_parse_duration_units():
    assert parse_duration("30d") == timedelta(days=30)
    assert parse_duration("1h") == timedelta(hours=1)
    assert parse_duration("90s") == timedelta(seconds=90)
    with pytest.raises(SchemaViolation):
        parse_duration("monthly")


def test_load_suite_round_trip_schema():
    text = json.dumps(
        [
            {"id": "c1", "kind": "Completeness", "target_fields": ["code"]},
            {"id": "c2", "kind": "Completeness", "target_fields": ["code"], "subset": "where-required"},
            {
                "id": "c3",
                "kind": "PlausibilityRange",
                "target_fields": ["age"],
                "config": {"min": 0, "max": 120},
                "stage": "SourceExtract",
            },
        ]
    )
    defs = load_suite(text)
    assert [d.id for d in defs] == ["c1", "c2", "c3"]
    assert defs[1].subset == WHERE_REQUIRED
    with pytest.raises(SchemaViolation):
        load_suite(json.dumps([{"id": "x", "kind": "Nope", "target_fields": []}]))


def test_standard_suite_covers_manifest(tmp_path):
    snapshot = make_snapshot(
        {
            "billable": ["Y"],
            "code": ["A"],
            "age": ["30"],
        },
        fields_extra=[
            {"name": "code", "policy_condition": {"field": "billable", "values": ["Y"]}},
            {"name": "age", "numeric_range": [0, 120]},
        ],
    )
    ids = [d.id for d in standard_suite(snapshot.manifest)]
    assert "completeness:code@SourceExtract" in ids
    assert "completeness-required:code@SourceExtract" in ids
    assert "conformance-value:code@SourceExtract" in ids
    assert "plausibility-range:age@SourceExtract" in ids


def test_mapping_suite_excludes_key():
    source, transformed = paired_snapshots(["A"], ["A"])
    defs = mapping_suite(source.manifest, transformed.manifest)
    assert [d.id for d in defs] == ["mapping:code"]
