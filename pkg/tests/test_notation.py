from __future__ import annotations

from fractions import Fraction

import pytest

from dqlocus.errors import (
    InvalidPhaseForOrganization,
    NotationSyntaxError,
    PercentOutOfRange,
    UnknownActor,
    UnresolvedLabel,
)
from dqlocus.notation import (
    DQAssertion,
    Measurement,
    ParseMode,
    Severity,
    format_percent,
    parse_assertion,
    parse_assertion_file,
    serialize_assertion,
    validate_assertion,
)
from dqlocus.taxonomy import LifecycleLocus, Organization, Phase, builtin_registry

PAPER_STRINGS = [
    "DGO-DG-Clinician (Completeness: 94%)",
    "DRO-DR-Researcher (Completeness: 87%)",
    "DGO-DG-Organization (Policy: states Diagnosis only required only for billable encounter)",
    "DRO-DT-Engineer (Mapping: 92% success)",
]


def test_parse_clinician_completeness():
    a = parse_assertion(PAPER_STRINGS[0], mode=ParseMode.STRICT)
    assert str(a.locus) == "DGO-DG-Clinician"
    assert a.parameter is not None and a.parameter.name == "Completeness"
    assert a.measurement.numeric_fraction == Fraction(94, 100)
    assert a.measurement.qualifier_text is None


def test_parse_researcher_completeness():
    a = parse_assertion(PAPER_STRINGS[1], mode=ParseMode.STRICT)
    assert str(a.locus) == "DRO-DR-Researcher"
    assert a.measurement.numeric_fraction == Fraction(87, 100)


def test_parse_policy_assertion_keeps_text_verbatim():
    a = parse_assertion(PAPER_STRINGS[2], mode=ParseMode.LENIENT)
    assert a.label == "Policy"
    assert a.measurement.numeric_fraction is None
    assert a.measurement.qualifier_text == (
        "states Diagnosis only required only for billable encounter"
    )
    assert a.parameter is not None and a.parameter.name == "Governance"


def test_parse_mapping_assertion_resolves_alias():
    a = parse_assertion(PAPER_STRINGS[3], mode=ParseMode.LENIENT)
    assert str(a.locus) == "DRO-DT-DataEngineer"
    assert a.measurement.numeric_fraction == Fraction(92, 100)
    assert a.measurement.qualifier_text == "success"
    assert a.parameter is not None and a.parameter.name == "Interoperability"


def test_parse_short_form_lenient_only():
    a = parse_assertion("DG-EHR (Conformance: 100%)", mode=ParseMode.LENIENT)
    assert str(a.locus) == "DGO-DG-EHRSystem"
    with pytest.raises(NotationSyntaxError):
        parse_assertion("DG-EHR (Conformance: 100%)", mode=ParseMode.STRICT)


def test_parse_rejects_dro_dg():
    with pytest.raises(InvalidPhaseForOrganization):
        parse_assertion("DRO-DG-Clinician (Completeness: 90%)", mode=ParseMode.LENIENT)


def test_parse_alias_rejected_in_strict():
    with pytest.raises(UnknownActor):
        parse_assertion(PAPER_STRINGS[3], mode=ParseMode.STRICT)


def test_parse_unresolved_label_strict_vs_lenient():
    text = "DGO-DG-Clinician (Legibility: 50%)"
    with pytest.raises(UnresolvedLabel):
        parse_assertion(text, mode=ParseMode.STRICT)
    a = parse_assertion(text, mode=ParseMode.LENIENT)
    assert a.parameter is None
    assert a.label == "Legibility"


def test_parse_percent_out_of_range():
    with pytest.raises(PercentOutOfRange):
        parse_assertion("DGO-DG-Clinician (Completeness: 120%)", mode=ParseMode.LENIENT)


def test_parse_syntax_error_carries_offset():
    bad = "DGO-DG-Clinician Completeness: 94%"
    with pytest.raises(NotationSyntaxError) as exc:
        parse_assertion(bad, mode=ParseMode.STRICT)
    assert 0 <= exc.value.offset <= len(bad)


def test_parse_empty_value_rejected():
    with pytest.raises(NotationSyntaxError):
        parse_assertion("DGO-DG-Clinician (Completeness: )", mode=ParseMode.LENIENT)


def test_parse_decimal_percent_precision():
    a = parse_assertion("DGO-DG-Clinician (Completeness: 93.5%)", mode=ParseMode.STRICT)
    assert a.measurement.numeric_fraction == Fraction(935, 1000)
    assert a.measurement.display_precision == 1


def test_serialize_canonicalizes_engineer():
    a = parse_assertion(PAPER_STRINGS[3], mode=ParseMode.LENIENT)
    assert serialize_assertion(a) == "DRO-DT-DataEngineer (Mapping: 92% success)"


def test_serialize_round_trip_canonical_strings():
    for text in (PAPER_STRINGS[0], PAPER_STRINGS[1], PAPER_STRINGS[2]):
        assert serialize_assertion(parse_assertion(text, mode=ParseMode.LENIENT)) == text


def test_serialize_zero_percent():
    a = DQAssertion(
        locus=LifecycleLocus(Organization.DGO, Phase.DG, "Clinician"),
        label="Completeness",
        measurement=Measurement(numeric_fraction=Fraction(0)),
    )
    assert serialize_assertion(a) == "DGO-DG-Clinician (Completeness: 0%)"


def test_format_percent_round_half_up():
    assert format_percent(Fraction(1, 3)) == "33%"
    assert format_percent(Fraction(1, 200)) == "1%"  # 0.5% rounds up
    assert format_percent(Fraction(1, 200), 1) == "0.5%"
    assert format_percent(Fraction(935, 1000), 1) == "93.5%"
    assert format_percent(Fraction(935, 1000)) == "94%"
    assert format_percent(Fraction(1), 2) == "100.00%"


def test_validate_paper_assertions_have_no_errors():
    for text in PAPER_STRINGS:
        a = parse_assertion(text, mode=ParseMode.LENIENT)
        findings = validate_assertion(a)
        assert [f for f in findings if f.severity is Severity.ERROR] == []


def test_validate_flags_percent_out_of_range():
    a = DQAssertion(
        locus=LifecycleLocus(Organization.DGO, Phase.DG, "Clinician"),
        label="Completeness",
        measurement=Measurement(numeric_fraction=Fraction(12, 10)),
    )
    findings = validate_assertion(a)
    assert any(f.code == "PercentOutOfRange" and f.severity is Severity.ERROR for f in findings)


def test_validate_warns_on_unresolved_label():
    a = parse_assertion("DGO-DG-Clinician (Legibility: 50%)", mode=ParseMode.LENIENT)
    findings = validate_assertion(a)
    assert [(f.severity, f.code) for f in findings] == [(Severity.WARNING, "UnresolvedLabel")]


def test_validate_mapping_label_resolves_by_default():
    a = parse_assertion("DRO-DT-DataEngineer (Mapping: 92%)", mode=ParseMode.LENIENT)
    assert validate_assertion(a) == []
    # without the default mapping the label is only a warning
    findings = validate_assertion(a, label_map={"Mapping": "Interoperability"})
    assert findings == []


def test_validate_flags_invalid_locus():
    a = DQAssertion(
        locus=LifecycleLocus(Organization.DRO, Phase.DG, "Clinician"),
        label="Completeness",
        measurement=Measurement(numeric_fraction=Fraction(9, 10)),
    )
    findings = validate_assertion(a)
    assert any(f.code == "InvalidPhaseForOrganization" for f in findings)


def test_parse_assertion_file_skips_comments_and_collects_issues():
    text = "\n".join(
        [
            "# paper examples",
            PAPER_STRINGS[0],
            "",
            "DRO-DG-Clinician (Completeness: 90%)",
            "not an assertion",
        ]
    )
    assertions, issues = parse_assertion_file(text, builtin_registry())
    assert [n for n, _ in assertions] == [2]
    assert [(i.line_number, i.error) for i in issues] == [
        (4, "InvalidPhaseForOrganization"),
        (5, "NotationSyntaxError"),
    ]


def test_raw_text_retained_for_audit():
    a = parse_assertion(PAPER_STRINGS[3], mode=ParseMode.LENIENT)
    assert a.raw_text == PAPER_STRINGS[3]
