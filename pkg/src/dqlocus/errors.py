"""Exception hierarchy shared by all dqlocus modules.

Every error the toolkit raises deliberately derives from ``DqError`` so
callers (and the CLI) can distinguish tool-level failures from ordinary
Python bugs.
"""

from __future__ import annotations


class DqError(Exception):
    """Base class for all errors raised by dqlocus."""


# --- taxonomy -----------------------------------------------------------

class InvalidPhaseForOrganization(DqError):
    """The (organization, phase) pair is not part of the lifecycle model."""


class UnknownActor(DqError):
    """Actor name resolves to nothing in the registry."""


class ActorPhaseMismatch(DqError):
    """Actor exists but is not allowed at the requested organization/phase."""


class DuplicateActor(DqError):
    """Actor name is already registered."""


class AliasCollision(DqError):
    """Alias collides with an existing canonical name or alias."""


class EmptyAllowedPhases(DqError):
    """Actor registration carried no allowed organization/phase pairs."""


class InvalidActorName(DqError):
    """Actor name does not fit the notation's identifier grammar."""


class BuiltinActorImmutable(DqError):
    """Builtin actors cannot be removed or redefined."""


# --- notation -----------------------------------------------------------

class NotationSyntaxError(DqError):
    """Assertion text does not match the grammar.

    ``offset`` is the byte offset into the input at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class PercentOutOfRange(DqError):
    """Percent literal exceeds 100%."""


class UnresolvedLabel(DqError):
    """Label does not map to a core parameter (strict parsing only)."""


# --- ingest -------------------------------------------------------------

class SchemaViolation(DqError):
    """Document does not match the expected schema."""


class DanglingColumnReference(DqError):
    """Manifest references a column that is not defined as a field."""


class DuplicateFieldName(DqError):
    """Two manifest fields share a name."""


class MissingColumn(DqError):
    """Dataset lacks a column the manifest requires."""


class HeaderMalformed(DqError):
    """Dataset header row is absent, empty, or has duplicate names."""


# --- assess -------------------------------------------------------------

class CheckConfigError(DqError):
    """A check definition cannot be evaluated against the snapshot."""


class UnknownField(CheckConfigError):
    """Check targets a field the manifest does not define."""


class MissingConfig(CheckConfigError):
    """Check kind requires configuration the field/definition lacks."""


class InvalidRange(CheckConfigError):
    """Plausibility range has min greater than max."""


class NonNumericField(CheckConfigError):
    """Range check targets a field that is not numeric or date-valued."""


class NonTemporalField(CheckConfigError):
    """Temporal check targets a field that is not date/timestamp-valued."""


class NoActorColumn(CheckConfigError):
    """Stratified check requested but the manifest declares no actor column."""


class NoTimestampColumns(CheckConfigError):
    """Timeliness check requires record and availability timestamp fields."""


class StageMismatch(CheckConfigError):
    """Paired-snapshot check got snapshots at the wrong lifecycle stages."""


class KeyColumnMissing(CheckConfigError):
    """Paired-snapshot check requires a key column declared in both manifests."""


class KeyMismatch(CheckConfigError):
    """Key values do not align rows one-to-one across paired snapshots."""


# --- attribute ----------------------------------------------------------

class DuplicatePriority(DqError):
    """Two rules in one rule set share a priority."""


class InvalidLocus(DqError):
    """Rule targets a locus the taxonomy rejects."""


class ParameterMismatch(DqError):
    """Cross-locus comparison requires both assertions to share a parameter."""


class NonNumericAssertion(DqError):
    """Cross-locus comparison requires numeric measurements."""


# --- report -------------------------------------------------------------

class ParameterNotAttestable(DqError):
    """Attestation names a parameter that is computed, never attested."""


class InvalidReport(DqError):
    """Report violates its own invariants (for example an invalid assertion)."""


# --- simulate -----------------------------------------------------------

class InvalidScenario(DqError):
    """Scenario document is inconsistent or out of range."""
